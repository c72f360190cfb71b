fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(crowd_sweep::cli::run(&argv));
}
