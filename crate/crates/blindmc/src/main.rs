fn main() { std::process::exit(blindmc::cli::run(std::env::args_os())) }
