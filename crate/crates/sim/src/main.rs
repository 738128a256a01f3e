fn main() {
    std::process::exit(qsdc_sim::main_with_args(std::env::args_os()));
}
