fn main() { std::process::exit(modnls_cli::run(std::env::args().collect())); }
