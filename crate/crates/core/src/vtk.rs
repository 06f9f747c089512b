//! Legacy ASCII VTK snapshots of the deformed surface.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagnostics::DensityField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::Vec3;

/// VTK cell type id for triangles.
const VTK_TRIANGLE: u8 = 5;

/// Renders an unstructured grid with deformed positions and point data
/// `u`, `v`, `e_kin_density`, `e_pot_density`.
pub fn render_snapshot(mesh: &Mesh, u: &[Vec3], v: &[Vec3], densities: &DensityField, title: &str) -> String {
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let mut s = String::with_capacity(nv * 160 + nt * 24);
    s.push_str("# vtk DataFile Version 3.0\n");
    // The title line must not contain newlines and is limited to 256 characters.
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    s.push_str(&title);
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");

    writeln!(s, "POINTS {nv} double").unwrap();
    for (x, d) in mesh.positions().iter().zip(u) {
        let p = x + d;
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }

    writeln!(s, "CELLS {nt} {}", nt * 4).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        writeln!(s, "{VTK_TRIANGLE}").unwrap();
    }

    writeln!(s, "POINT_DATA {nv}").unwrap();
    for (name, field) in [("u", u), ("v", v)] {
        writeln!(s, "VECTORS {name} double").unwrap();
        for x in field {
            writeln!(s, "{} {} {}", x.x, x.y, x.z).unwrap();
        }
    }
    for (name, field) in [
        ("e_kin_density", &densities.e_kin_density),
        ("e_pot_density", &densities.e_pot_density),
    ] {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for x in field {
            writeln!(s, "{x}").unwrap();
        }
    }
    s
}

pub fn write_snapshot(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    u: &[Vec3],
    v: &[Vec3],
    densities: &DensityField,
    title: &str,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_snapshot(mesh, u, v, densities, title)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_icosphere;

    #[test]
    fn snapshot_layout() {
        let m = generate_icosphere(0, 1.0).unwrap();
        let u = vec![Vec3::new(0.0, 0.0, 0.5); 12];
        let v = vec![Vec3::zeros(); 12];
        let d = DensityField {
            e_kin_density: vec![0.0; 12],
            e_pot_density: vec![1.5; 12],
        };
        let text = render_snapshot(&m, &u, &v, &d, "t = 0.25");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], "POINTS 12 double");
        // North pole displaced by +0.5 in z.
        assert_eq!(lines[5], "0 0 1.5");
        assert!(text.contains("CELLS 20 80\n"));
        assert!(text.contains("CELL_TYPES 20\n"));
        assert!(text.contains("POINT_DATA 12\nVECTORS u double\n"));
        assert!(text.contains("VECTORS v double\n"));
        assert!(text.contains("SCALARS e_kin_density double 1\nLOOKUP_TABLE default\n"));
        assert!(text.contains("SCALARS e_pot_density double 1\nLOOKUP_TABLE default\n1.5\n"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 20);
    }
}
