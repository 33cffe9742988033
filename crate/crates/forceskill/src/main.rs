fn main() {
    forceskill::cli::init_logging();
    let code = forceskill::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
