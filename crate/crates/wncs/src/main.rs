fn main() {
    std::process::exit(wncs::cli_main(std::env::args_os()));
}
