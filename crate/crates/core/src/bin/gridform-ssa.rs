fn main() {
    std::process::exit(gridform_ssa::harness::main_with_args(std::env::args_os()));
}
