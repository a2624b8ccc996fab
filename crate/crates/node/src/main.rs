fn main() {
    let outcome = studchain::cli::cli_dispatch(std::env::args_os());
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    std::process::exit(outcome.code);
}
