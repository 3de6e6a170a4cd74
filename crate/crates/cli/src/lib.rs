pub mod app;
pub mod engine;
pub mod server;

pub use app::run;
