fn main() {
    std::process::exit(qadebias::cli::run(std::env::args_os()));
}
