//! TOML config file merged into the argument list.
//!
//! A table named after a subcommand (`[spu]`, `[clt.footprint]`) supplies
//! default flags for it: `key = value` becomes `--key value`, `key = true`
//! becomes `--key`, and arrays repeat the flag. Command-line flags given
//! explicitly take precedence because later occurrences override.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::{Table, Value};

/// Subcommands that take a further subcommand.
const NESTED: &[&str] = &["clt"];

/// Removes `--config <path>` from `args` and splices the matching config
/// tables in after the subcommand path.
pub fn merge(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = take_config(&mut args)? else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let table: Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;

    let mut depth = 0;
    let mut cursor = &table;
    let mut insert_at = 1;
    let mut flags = Vec::new();
    while let Some(name) = args.get(1 + depth).and_then(|a| a.to_str()) {
        if name.starts_with('-') {
            break;
        }
        insert_at = 2 + depth;
        let nested = depth == 0 && NESTED.contains(&name);
        match cursor.get(name).or_else(|| cursor.get(&name.replace('-', "_"))) {
            Some(Value::Table(t)) => {
                flags = table_flags(t)?;
                cursor = t;
            }
            Some(_) => bail!("config key `{name}` must be a table"),
            None => flags.clear(),
        }
        depth += 1;
        if !nested {
            break;
        }
    }
    args.splice(insert_at..insert_at, flags);
    Ok(args)
}

fn take_config(args: &mut Vec<OsString>) -> Result<Option<std::path::PathBuf>> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            if i + 1 >= args.len() {
                bail!("--config needs a path");
            }
            let p = args.remove(i + 1);
            args.remove(i);
            return Ok(Some(p.into()));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            let p = Path::new(p).to_path_buf();
            args.remove(i);
            return Ok(Some(p));
        }
        i += 1;
    }
    Ok(None)
}

fn table_flags(t: &Table) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (k, v) in t {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Table(_) => {}
            Value::Boolean(true) => out.push(flag.into()),
            Value::Boolean(false) => {}
            Value::Array(items) => {
                for item in items {
                    out.push(flag.clone().into());
                    out.push(scalar(k, item)?.into());
                }
            }
            other => {
                out.push(flag.into());
                out.push(scalar(k, other)?.into());
            }
        }
    }
    Ok(out)
}

fn scalar(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        _ => bail!("config key `{key}` must be a scalar"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    fn strings(v: Vec<OsString>) -> Vec<String> {
        v.into_iter().map(|s| s.into_string().unwrap()).collect()
    }

    #[test]
    fn splices_subcommand_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[rates]\nactivity_uci = 100\n\n[clt.footprint]\nn = 8\nk = 64\n").unwrap();
        let cfg = p.to_str().unwrap();
        let got = merge(args(&["spu", "--config", cfg, "rates", "--efficiency", "0.5"])).unwrap();
        assert_eq!(strings(got), ["spu", "rates", "--activity-uci", "100", "--efficiency", "0.5"]);
        let got = merge(args(&["spu", &format!("--config={cfg}"), "clt", "footprint"])).unwrap();
        assert_eq!(strings(got), ["spu", "clt", "footprint", "--k", "64", "--n", "8"]);
        let got = merge(args(&["spu", "--config", cfg, "bench"])).unwrap();
        assert_eq!(strings(got), ["spu", "bench"]);
    }

    #[test]
    fn booleans_and_arrays() {
        let t: Table = "a = true\nb = false\nc = [1, 2]\nd = \"x\"".parse().unwrap();
        assert_eq!(strings(table_flags(&t).unwrap()), ["--a", "--c", "1", "--c", "2", "--d", "x"]);
    }
}
