fn main() {
    std::process::exit(levy_stability::lab::cli::cli_main(std::env::args_os()));
}
