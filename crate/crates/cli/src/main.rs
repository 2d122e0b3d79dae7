fn main() {
    std::process::exit(pauli_lll_cli::cli_main(std::env::args_os()));
}
