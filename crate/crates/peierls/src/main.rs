fn main() {
    std::process::exit(peierls::cli::dispatch(std::env::args()));
}
