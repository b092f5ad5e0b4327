fn main() { std::process::exit(textmark::cli::run()) }
