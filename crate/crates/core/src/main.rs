fn main() {
    std::process::exit(randlsv::cli::run(std::env::args_os()));
}
