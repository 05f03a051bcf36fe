fn main() {
    if let Err(e) = cmiscan::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
