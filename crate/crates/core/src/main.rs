fn main() {
    std::process::exit(infocluster::cli::run(std::env::args_os()));
}
