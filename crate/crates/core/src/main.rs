fn main() {
    std::process::exit(cellhom::cli::main_with(std::env::args_os()));
}
