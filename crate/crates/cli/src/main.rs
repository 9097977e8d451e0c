use clap::Parser;

fn main() {
    let cli = match plap_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { plap_cli::EXIT_CONFIG } else { plap_cli::EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(plap_cli::main_with(&cli));
}
