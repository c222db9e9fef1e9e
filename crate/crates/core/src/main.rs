fn main() {
    std::process::exit(riskmdp::cli::run(std::env::args_os()));
}
