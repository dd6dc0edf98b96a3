use std::fs::File;
use std::io::{self, Write};

use serde::Serialize;

use crate::commands::CliError;
use crate::config::{Format, OutputArgs, RunConfig};

/// A result row with a fixed CSV layout.
pub trait Row: Serialize {
    fn header(oracle: bool) -> Vec<&'static str>;
    fn fields(&self) -> Vec<String>;
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Serialize)]
struct JsonOutput<'a, R> {
    config: &'a RunConfig,
    rows: &'a [R],
}

pub fn write_rows<R: Row>(out: &OutputArgs, config: &RunConfig, rows: &[R], oracle: bool) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match &out.output {
        Some(path) => Box::new(File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    match out.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(R::header(oracle))?;
            for r in rows {
                w.write_record(r.fields())?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &JsonOutput { config, rows })
                .map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(sink).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}
