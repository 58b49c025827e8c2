fn main() {
    std::process::exit(mvlabel_cli::run(std::env::args_os()));
}
