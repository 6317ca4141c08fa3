fn main() {
    let env = std::env::vars().collect();
    std::process::exit(labcast_cli::run(std::env::args_os(), &env));
}
