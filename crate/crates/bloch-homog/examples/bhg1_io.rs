//! Write a coefficient field to a BHG1 file, read it back, and describe it as a
//! medium JSON.

use bloch_homog::io::{load_coeffs, save_coeffs, Medium};
use bloch_homog::tensor::Lame;

fn main() -> bloch_homog::Result<()> {
    let medium = Medium::CubeInclusion {
        matrix: Lame { lambda: 1.0, mu: 1.0 },
        inclusion: Lame { lambda: 10.0, mu: 10.0 },
        side: 0.5,
        resolution: 4,
    };
    let field = medium.build()?;
    let path = std::env::temp_dir().join("inclusion.bhg");
    save_coeffs(&path, &field)?;
    let back = load_coeffs(&path)?;
    println!("{} bytes, hash {} -> {}", std::fs::metadata(&path)?.len(), field.hash(), back.hash());
    let file_medium = Medium::File { path: path.to_string_lossy().into_owned() };
    println!("{}", serde_json::to_string(&medium)?);
    println!("{}", serde_json::to_string(&file_medium)?);
    Ok(())
}
