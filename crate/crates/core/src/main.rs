fn main() { std::process::exit(histowas::cli::main()) }
