fn main() { std::process::exit(fieldroad::cli::main(std::env::args().collect())); }
