fn main() {
    std::process::exit(spfide::cli::run(std::env::args_os()));
}
