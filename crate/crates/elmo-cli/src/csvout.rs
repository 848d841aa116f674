//! Deterministic CSV writing: a schema comment line, a header row, then
//! rows sorted by the caller.

use std::io::Write;
use std::path::Path;

pub fn write_csv(
    dir: &Path,
    name: &str,
    schema: &str,
    header: &str,
    rows: &[String],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(name))?;
    writeln!(f, "# {schema}")?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}
