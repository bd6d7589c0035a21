mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failure with an exit category and a one-line message.
#[derive(Debug)]
pub struct Failure {
    pub category: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            category: "usage",
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category {
            "usage" => 2,
            "numeric" => 4,
            _ => 3,
        }
    }
}

impl From<immsbm::Error> for Failure {
    fn from(e: immsbm::Error) -> Self {
        Self {
            category: e.category().as_str(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Attaches a path to library errors.
pub trait Context<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T> Context<T> for immsbm::Result<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| {
            let mut f = Failure::from(e);
            f.message = format!("{}: {}", path.display(), f.message);
            f
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprint!("{}", text.replacen("error:", "error[usage]:", 1));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }),
    )
    .format_timestamp(None)
    .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message.replace('\n', " "));
            ExitCode::from(f.exit_code())
        }
    }
}
