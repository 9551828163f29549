//! Every program under `corpus/`, as runnable core.

#![allow(dead_code)]

use std::path::Path;

use krust_core::syntax::CoreProgram;

pub struct Entry {
    pub name: String,
    pub program: CoreProgram,
}

/// `.kcl` files as written plus every `.krs` file the checker accepts,
/// lowered. Sorted by file name.
pub fn load(dir: &Path) -> Vec<Entry> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .expect("corpus dir")
        .map(|e| e.expect("dir entry").path())
        .collect();
    names.sort();
    let mut out = Vec::new();
    for path in names {
        let src = std::fs::read_to_string(&path).expect("readable");
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let program = match path.extension().and_then(|e| e.to_str()) {
            Some("kcl") => krust_core::parse_core(&src).unwrap_or_else(|e| panic!("{name}: {e}")),
            Some("krs") => {
                let p = krust_core::parse_surface(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
                if krust_core::check_program(&p).is_err() {
                    continue;
                }
                krust_core::lower_program(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
            }
            _ => continue,
        };
        out.push(Entry { name, program });
    }
    out
}
