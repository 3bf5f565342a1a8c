fn main() {
    std::process::exit(tweet_country::cli::main_with_args(std::env::args_os()));
}
