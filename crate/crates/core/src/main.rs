fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CCKIT_LOG", "off")).init();
    std::process::exit(cckit::cli::main_with(std::env::args_os()));
}
