use std::path::Path;

use asl_cli::images::write_png_tree;
use asl_core::synthetic::pattern_dataset;

/// Export a deterministic pattern dataset as a `class/*.png` tree.
pub fn export_pattern_tree(dir: &Path, classes: usize, per_class: usize) {
    let ds = pattern_dataset(classes, per_class, 50).unwrap();
    write_png_tree(&ds, dir).unwrap();
}
