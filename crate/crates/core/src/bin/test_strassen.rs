use std::process::ExitCode;

use strassen_tc::bench::{load_problems, parse_args, run_problem, write_csv, HEADER, USAGE};

fn main() -> ExitCode {
    let opts = match parse_args(std::env::args().skip(1)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            if !e.0.starts_with("usage:") {
                eprintln!("{USAGE}");
            }
            return ExitCode::from(2);
        }
    };
    let problems = match load_problems(&opts) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    println!("{HEADER}");
    let mut records = Vec::with_capacity(problems.len());
    for spec in &problems {
        match run_problem(spec, &opts) {
            Ok(r) => {
                println!("{r}");
                records.push(r);
            }
            Err(e) => {
                eprintln!("error: {spec}: {e}");
                return ExitCode::FAILURE;
            }
        }
    }

    if let Some(path) = &opts.csv {
        let written = std::fs::File::create(path)
            .map_err(csv::Error::from)
            .and_then(|f| write_csv(f, &records, &opts));
        if let Err(e) = written {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
