fn main() {
    std::process::exit(dephase_walk::cli::main_with_args(std::env::args_os()));
}
