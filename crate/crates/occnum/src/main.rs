fn main() {
    std::process::exit(occnum::run(std::env::args_os()));
}
