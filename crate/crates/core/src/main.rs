fn main() {
    std::process::exit(qffn_bert::cli::run(std::env::args_os()));
}
