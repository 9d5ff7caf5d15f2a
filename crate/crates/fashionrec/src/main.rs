fn main() {
    std::process::exit(fashionrec::cli::run(std::env::args_os()));
}
