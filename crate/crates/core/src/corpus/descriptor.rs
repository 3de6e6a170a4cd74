use serde::{Deserialize, Serialize};

/// Coarse attribute vocabulary, in vector order.
pub const ATTRIBUTES: [&str; 10] = [
    "pointy",
    "open",
    "bright",
    "covered",
    "shiny",
    "high-heel",
    "long",
    "formal",
    "sporty",
    "feminine",
];

pub const NUM_ATTRIBUTES: usize = ATTRIBUTES.len();

/// A closed enumeration of one categorical feature.
pub trait Enumerated: Copy + Eq + Sized + 'static {
    const ALL: &'static [Self];

    fn word(self) -> &'static str;

    fn index(self) -> usize {
        Self::ALL.iter().position(|v| *v == self).unwrap()
    }
}

macro_rules! enumeration {
    ($name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case")]
        pub enum $name {
            $($variant),+
        }

        impl Enumerated for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn word(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }
        }
    };
}

enumeration!(Category {
    Sneaker => "sneaker",
    Boot => "boot",
    Heel => "heel",
    Sandal => "sandal",
    Flat => "flat",
});

enumeration!(Color {
    Black => "black",
    White => "white",
    Gray => "gray",
    Brown => "brown",
    Beige => "beige",
    Red => "red",
    Pink => "pink",
    Orange => "orange",
    Yellow => "yellow",
    Green => "green",
    Blue => "blue",
    Purple => "purple",
});

enumeration!(Toe {
    Round => "round",
    Pointed => "pointed",
    Open => "open",
});

enumeration!(Pattern {
    Solid => "solid",
    Stripes => "stripes",
    Polka => "polka",
    Leopard => "leopard",
});

enumeration!(Ornament {
    Laces => "laces",
    Strap => "strap",
    Buckle => "buckle",
    Bow => "bow",
    Zipper => "zipper",
    None => "none",
});

enumeration!(Position {
    Toe => "toe",
    Side => "side",
    Top => "top",
    Ankle => "ankle",
});

/// Part-level categorical features of an item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FineFeatures {
    pub category: Category,
    pub primary_color: Color,
    pub accent_color: Color,
    pub toe: Toe,
    pub pattern: Pattern,
    pub ornament: Ornament,
    pub ornament_position: Position,
}

/// The categorical fields of [`FineFeatures`], in a fixed order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FineField {
    Category,
    PrimaryColor,
    AccentColor,
    Toe,
    Pattern,
    Ornament,
    OrnamentPosition,
}

impl FineField {
    pub const ALL: [FineField; 7] = [
        FineField::Category,
        FineField::PrimaryColor,
        FineField::AccentColor,
        FineField::Toe,
        FineField::Pattern,
        FineField::Ornament,
        FineField::OrnamentPosition,
    ];

    pub fn cardinality(self) -> usize {
        match self {
            FineField::Category => Category::ALL.len(),
            FineField::PrimaryColor | FineField::AccentColor => Color::ALL.len(),
            FineField::Toe => Toe::ALL.len(),
            FineField::Pattern => Pattern::ALL.len(),
            FineField::Ornament => Ornament::ALL.len(),
            FineField::OrnamentPosition => Position::ALL.len(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FineField::Category => "category",
            FineField::PrimaryColor => "primary_color",
            FineField::AccentColor => "accent_color",
            FineField::Toe => "toe",
            FineField::Pattern => "pattern",
            FineField::Ornament => "ornament",
            FineField::OrnamentPosition => "ornament_position",
        }
    }
}

impl FineFeatures {
    pub fn index_of(&self, field: FineField) -> usize {
        match field {
            FineField::Category => self.category.index(),
            FineField::PrimaryColor => self.primary_color.index(),
            FineField::AccentColor => self.accent_color.index(),
            FineField::Toe => self.toe.index(),
            FineField::Pattern => self.pattern.index(),
            FineField::Ornament => self.ornament.index(),
            FineField::OrnamentPosition => self.ornament_position.index(),
        }
    }

    pub fn word_of(&self, field: FineField) -> &'static str {
        match field {
            FineField::Category => self.category.word(),
            FineField::PrimaryColor => self.primary_color.word(),
            FineField::AccentColor => self.accent_color.word(),
            FineField::Toe => self.toe.word(),
            FineField::Pattern => self.pattern.word(),
            FineField::Ornament => self.ornament.word(),
            FineField::OrnamentPosition => self.ornament_position.word(),
        }
    }

    /// Number of one-hot slots needed to encode every field.
    pub fn one_hot_width() -> usize {
        FineField::ALL.iter().map(|f| f.cardinality()).sum()
    }

    pub fn write_one_hot(&self, out: &mut [f32]) {
        let mut offset = 0;
        for field in FineField::ALL {
            out[offset + self.index_of(field)] = 1.0;
            offset += field.cardinality();
        }
    }
}

/// Ground-truth semantics of one synthetic item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemDescriptor {
    pub coarse: [f32; NUM_ATTRIBUTES],
    pub fine: FineFeatures,
}

fn brightness(c: Color) -> f32 {
    match c {
        Color::Black => 0.05,
        Color::White => 0.95,
        Color::Gray => 0.45,
        Color::Brown => 0.3,
        Color::Beige => 0.75,
        Color::Red => 0.7,
        Color::Pink => 0.85,
        Color::Orange => 0.8,
        Color::Yellow => 0.95,
        Color::Green => 0.55,
        Color::Blue => 0.5,
        Color::Purple => 0.45,
    }
}

/// Noise-free coarse attribute scores implied by the fine features.
pub fn coarse_base(f: &FineFeatures) -> [f32; NUM_ATTRIBUTES] {
    use Category::*;
    let cat = |sneaker: f32, boot: f32, heel: f32, sandal: f32, flat: f32| match f.category {
        Sneaker => sneaker,
        Boot => boot,
        Heel => heel,
        Sandal => sandal,
        Flat => flat,
    };

    let pointy = match f.toe {
        Toe::Pointed => 0.85,
        Toe::Round => 0.2,
        Toe::Open => 0.35,
    } + cat(-0.1, 0.0, 0.05, 0.0, 0.0);

    let open = cat(0.0, 0.0, 0.15, 0.45, 0.1) + if f.toe == Toe::Open { 0.45 } else { 0.0 };

    let bright = 0.8 * brightness(f.primary_color) + 0.2 * brightness(f.accent_color);

    let covered = cat(0.75, 0.9, 0.35, 0.1, 0.45) - if f.toe == Toe::Open { 0.2 } else { 0.0 };

    let shiny = match f.pattern {
        Pattern::Solid => 0.5,
        Pattern::Stripes => 0.35,
        Pattern::Polka => 0.3,
        Pattern::Leopard => 0.25,
    } + match f.ornament {
        Ornament::Buckle => 0.3,
        Ornament::Zipper => 0.2,
        Ornament::Bow => 0.1,
        Ornament::Strap => 0.05,
        Ornament::Laces => -0.1,
        Ornament::None => 0.0,
    };

    let high_heel = cat(0.1, 0.45, 0.85, 0.35, 0.1);

    let long = cat(0.35, 0.9, 0.3, 0.2, 0.15)
        + if f.ornament_position == Position::Ankle { 0.1 } else { 0.0 };

    let formal = cat(0.1, 0.45, 0.8, 0.35, 0.55)
        + match f.pattern {
            Pattern::Solid => 0.1,
            Pattern::Stripes => 0.0,
            Pattern::Polka | Pattern::Leopard => -0.1,
        };

    let sporty = cat(0.9, 0.3, 0.05, 0.3, 0.2) + if f.ornament == Ornament::Laces { 0.1 } else { 0.0 };

    let feminine = cat(0.2, 0.35, 0.8, 0.6, 0.6)
        + if f.ornament == Ornament::Bow { 0.2 } else { 0.0 }
        + if matches!(f.primary_color, Color::Pink | Color::Purple) { 0.1 } else { 0.0 };

    [
        pointy, open, bright, covered, shiny, high_heel, long, formal, sporty, feminine,
    ]
}

/// Applies a jitter vector (each entry in [-0.1, 0.1]) and clamps to [0, 1].
pub fn derive_coarse(f: &FineFeatures, jitter: &[f32; NUM_ATTRIBUTES]) -> [f32; NUM_ATTRIBUTES] {
    let mut coarse = coarse_base(f);
    for (c, j) in coarse.iter_mut().zip(jitter) {
        *c = (*c + j).clamp(0.0, 1.0);
    }
    coarse
}
