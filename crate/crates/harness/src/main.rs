fn main() {
    std::process::exit(wbrtf_harness::cli::run(std::env::args_os()));
}
