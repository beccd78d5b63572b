fn main() {
    std::process::exit(ctas::commands::run_from(std::env::args()));
}
