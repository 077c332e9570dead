fn main() { std::process::exit(cdchase::cli::main()) }
