use clap::Parser;

fn main() {
    let cli = invsl::cli::Cli::parse();
    match invsl::cli::run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
