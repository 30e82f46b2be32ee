fn main() {
    std::process::exit(ducrl::cli::main_exit_code());
}
