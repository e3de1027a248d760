fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEGVOTE_LOG", "warn")).init();
    std::process::exit(segvote::cli::run(std::env::args_os()));
}
