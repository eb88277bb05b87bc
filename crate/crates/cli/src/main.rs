fn main() {
    std::process::exit(tokensim_cli::run(std::env::args_os()));
}
