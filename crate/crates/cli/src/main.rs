fn main() {
    std::process::exit(soliditycheck::run(std::env::args_os()));
}
