fn main() {
    std::process::exit(flowsampler::harness::cli::main_with_args(std::env::args_os()));
}
