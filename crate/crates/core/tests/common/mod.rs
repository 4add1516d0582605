#![allow(dead_code)]

use std::path::Path;

/// Runs the CLI in-process, returning `(exit code, stdout, stderr)`.
pub fn pacconf(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = pacconf::cli::run(std::iter::once("pacconf").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}
