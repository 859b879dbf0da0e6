fn main() {
    std::process::exit(wemf::cli::run(std::env::args_os()));
}
