fn main() {
    std::process::exit(krein::cli::run(std::env::args_os()));
}
