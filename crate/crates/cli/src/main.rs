use clap::Parser;
use devfactor_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for note in &summary.notes {
                eprintln!("{note}");
            }
            println!("{}", summary.line);
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            println!("{}: failed (exit {code})", cli.command.name());
            std::process::exit(code);
        }
    }
}
