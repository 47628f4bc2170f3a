//! Sphere pixelizations with symmetric neighbor adjacency.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported pixelization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum GridScheme {
    /// HEALPix with `nside = 2^r`; `12 nside^2` equal-area pixels.
    Healpix { nside: u32 },
    /// Icosahedron subdivided `s` times; `10 * 4^s + 2` vertices.
    Icosphere { subdivisions: u32 },
}

/// Pixel centers on the unit sphere plus a symmetric adjacency list in
/// compressed (CSR) form.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub scheme: GridScheme,
    centers: Vec<[f64; 3]>,
    neighbor_offsets: Vec<u32>,
    neighbor_data: Vec<u32>,
}

impl SphereGrid {
    pub fn n_pixels(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn center(&self, pixel: usize) -> [f64; 3] {
        self.centers[pixel]
    }

    /// Sorted neighbor indices of `pixel`.
    pub fn neighbors(&self, pixel: usize) -> &[u32] {
        let a = self.neighbor_offsets[pixel] as usize;
        let b = self.neighbor_offsets[pixel + 1] as usize;
        &self.neighbor_data[a..b]
    }

    /// Resolution parameter: `r` for HEALPix (`nside = 2^r`), subdivision
    /// count for icospheres.
    pub fn resolution(&self) -> u32 {
        match self.scheme {
            GridScheme::Healpix { nside } => nside.trailing_zeros(),
            GridScheme::Icosphere { subdivisions } => subdivisions,
        }
    }

    fn from_adjacency(
        scheme: GridScheme,
        centers: Vec<[f64; 3]>,
        adjacency: Vec<Vec<u32>>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(centers.len() + 1);
        let mut data = Vec::new();
        offsets.push(0u32);
        for mut nb in adjacency {
            nb.sort_unstable();
            nb.dedup();
            data.extend_from_slice(&nb);
            offsets.push(data.len() as u32);
        }
        SphereGrid {
            scheme,
            centers,
            neighbor_offsets: offsets,
            neighbor_data: data,
        }
    }
}

/// Build a pixelized sphere with its adjacency.
pub fn build_grid(scheme: GridScheme) -> Result<SphereGrid> {
    match scheme {
        GridScheme::Healpix { nside } => {
            if !nside.is_power_of_two() || nside > 1 << 13 {
                return Err(Error::argument(format!(
                    "HEALPix nside must be a power of two <= 8192, got {nside}"
                )));
            }
            build_healpix(scheme, nside)
        }
        GridScheme::Icosphere { subdivisions } => {
            if subdivisions > 9 {
                return Err(Error::argument(format!(
                    "icosphere subdivisions must be <= 9, got {subdivisions}"
                )));
            }
            Ok(build_icosphere(scheme, subdivisions))
        }
    }
}

fn build_healpix(scheme: GridScheme, nside: u32) -> Result<SphereGrid> {
    let depth = nside.trailing_zeros() as u8;
    let layer = cdshealpix::nested::get(depth);
    let n = layer.n_hash() as usize;
    let mut centers = Vec::with_capacity(n);
    let mut adjacency = Vec::with_capacity(n);
    for h in 0..n as u64 {
        let (lon, lat) = layer.center(h);
        let (cl, sl) = (lat.cos(), lat.sin());
        centers.push([cl * lon.cos(), cl * lon.sin(), sl]);
        let nb: Vec<u32> = layer
            .neighbours(h, false)
            .values_vec()
            .into_iter()
            .map(|v| v as u32)
            .collect();
        adjacency.push(nb);
    }
    Ok(SphereGrid::from_adjacency(scheme, centers, adjacency))
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn build_icosphere(scheme: GridScheme, subdivisions: u32) -> SphereGrid {
    // Icosahedron from the three golden rectangles.
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<[f64; 3]>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (va, vb) = (vertices[a as usize], vertices[b as usize]);
                let m = normalize([va[0] + vb[0], va[1] + vb[1], va[2] + vb[2]]);
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }

    let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); vertices.len()];
    for [a, b, c] in &faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            adj[*u as usize].insert(*v);
            adj[*v as usize].insert(*u);
        }
    }
    let adjacency: Vec<Vec<u32>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
    SphereGrid::from_adjacency(scheme, vertices, adjacency)
}
