fn main() {
    std::process::exit(dmgr::run(std::env::args_os()));
}
