fn main() {
    std::process::exit(rankuq::cli::run(std::env::args_os()));
}
