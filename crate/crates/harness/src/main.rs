fn main() {
    std::process::exit(mlab_harness::run_cli(std::env::args_os()));
}
