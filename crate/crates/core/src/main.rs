fn main() {
    std::process::exit(vemwave::cli::parse_and_dispatch(std::env::args()));
}
