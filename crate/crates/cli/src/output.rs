use std::io::Write;

use latent_forest::ClassScore;
use serde::Serialize;

use crate::Failure;

pub const SCORE_HEADER: &str = "# model\tdim\tloglik\tbic\tsbic\tcode";

pub fn score_line(model: usize, r: &ClassScore) -> String {
    format!("{model}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}", r.dim, r.loglik, r.bic, r.sbic, r.code)
}

pub fn print_json<T: Serialize>(out: &mut impl Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}
