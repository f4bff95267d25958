//! Binary morphology on row-major `u8` grids (0 = background, 1 = set).

/// Neighbour offsets in clockwise order starting north:
/// N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

#[inline]
fn at(data: &[u8], w: usize, h: usize, x: isize, y: isize) -> u8 {
    if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
        0
    } else {
        data[y as usize * w + x as usize]
    }
}

#[inline]
fn ring(data: &[u8], w: usize, h: usize, x: usize, y: usize) -> [u8; 8] {
    let mut p = [0u8; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        p[k] = at(data, w, h, x as isize + dx, y as isize + dy);
    }
    p
}

/// Labels 8-connected components. Returns per-pixel labels (0 for
/// background, otherwise 1-based component id in raster order of first
/// pixel) and the size of each component (`sizes[id - 1]`).
pub fn label_components(data: &[u8], w: usize, h: usize) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if data[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in RING {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if data[j] != 0 && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn count_components(data: &[u8], w: usize, h: usize) -> usize {
    label_components(data, w, h).1.len()
}

/// Drops 8-connected components with fewer than `min_size` pixels.
pub fn remove_small_components(data: &[u8], w: usize, h: usize, min_size: usize) -> Vec<u8> {
    let (labels, sizes) = label_components(data, w, h);
    labels
        .iter()
        .map(|&l| (l != 0 && sizes[l as usize - 1] >= min_size) as u8)
        .collect()
}

/// Offsets of a digital disk `dx² + dy² <= r²`.
pub fn disk(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn dilate(data: &[u8], w: usize, h: usize, radius: usize) -> Vec<u8> {
    if radius == 0 {
        return data.to_vec();
    }
    let se = disk(radius);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if data[y * w + x] == 0 {
                continue;
            }
            for &(dx, dy) in &se {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                    out[ny as usize * w + nx as usize] = 1;
                }
            }
        }
    }
    out
}

/// Erosion with a disk; pixels outside the grid count as set, so
/// `erode(dilate(x))` contains `x`.
pub fn erode(data: &[u8], w: usize, h: usize, radius: usize) -> Vec<u8> {
    if radius == 0 {
        return data.to_vec();
    }
    let se = disk(radius);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if data[y * w + x] == 0 {
                continue;
            }
            let keep = se.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || data[ny as usize * w + nx as usize] != 0
            });
            out[y * w + x] = keep as u8;
        }
    }
    out
}

/// Morphological closing: dilation followed by erosion.
pub fn close(data: &[u8], w: usize, h: usize, radius: usize) -> Vec<u8> {
    erode(&dilate(data, w, h, radius), w, h, radius)
}

/// Zhang-Suen thinning followed by removal of remaining redundant
/// (8-simple, non-end) pixels, which Zhang-Suen leaves on diagonal
/// staircases.
pub fn thin(data: &[u8], w: usize, h: usize) -> Vec<u8> {
    let mut img = data.to_vec();
    zhang_suen(&mut img, w, h);
    prune_redundant(&mut img, w, h);
    img
}

fn zhang_suen(img: &mut [u8], w: usize, h: usize) {
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            doomed.clear();
            for y in 0..h {
                for x in 0..w {
                    if img[y * w + x] == 0 {
                        continue;
                    }
                    let p = ring(img, w, h, x, y);
                    let b: u8 = p.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    // p[0]=N p[2]=E p[4]=S p[6]=W
                    let (n, e, s, wv) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 {
                        n * e * s == 0 && e * s * wv == 0
                    } else {
                        n * e * wv == 0 && n * s * wv == 0
                    };
                    if ok {
                        doomed.push(y * w + x);
                    }
                }
            }
            for &i in &doomed {
                img[i] = 0;
            }
            changed |= !doomed.is_empty();
        }
        if !changed {
            break;
        }
    }
}

/// Number of 8-connected foreground groups among the ring neighbours.
fn foreground_groups(p: &[u8; 8]) -> usize {
    // Ring positions are adjacent when consecutive, and the four edge
    // neighbours (even indices) are additionally adjacent to the next edge
    // neighbour across a corner.
    let mut seen = [false; 8];
    let mut groups = 0;
    for s in 0..8 {
        if p[s] == 0 || seen[s] {
            continue;
        }
        groups += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            let mut nbrs = vec![(i + 1) % 8, (i + 7) % 8];
            if i % 2 == 0 {
                nbrs.push((i + 2) % 8);
                nbrs.push((i + 6) % 8);
            }
            for j in nbrs {
                if p[j] == 1 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    groups
}

/// Number of 4-connected background groups, within the ring, that touch
/// the centre through an edge neighbour.
fn background_groups(p: &[u8; 8]) -> usize {
    // Edge neighbours 0,2,4,6; corner 2k+1 links edge 2k and 2k+2.
    let edges: Vec<usize> = [0, 2, 4, 6].into_iter().filter(|&k| p[k] == 0).collect();
    if edges.is_empty() {
        return 0;
    }
    let mut parent: Vec<usize> = (0..8).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for k in [0usize, 2, 4, 6] {
        let corner = k + 1;
        let next = (k + 2) % 8;
        if p[k] == 0 && p[corner] == 0 && p[next] == 0 {
            let (a, b) = (find(&mut parent, k), find(&mut parent, next));
            parent[a] = b;
        }
    }
    let mut roots: Vec<usize> = edges.iter().map(|&k| find(&mut parent, k)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// True when deleting the centre pixel preserves 8-connected topology.
pub fn is_simple(p: &[u8; 8]) -> bool {
    foreground_groups(p) == 1 && background_groups(p) == 1
}

fn prune_redundant(img: &mut [u8], w: usize, h: usize) {
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if img[y * w + x] == 0 {
                    continue;
                }
                let p = ring(img, w, h, x, y);
                let b: u8 = p.iter().sum();
                if b >= 2 && is_simple(&p) {
                    img[y * w + x] = 0;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// True when the set pixel at `(x, y)` would be deleted by [`thin`]: it has
/// at least two set neighbours and is simple. A mask with no removable
/// pixel is a fixed point of thinning.
pub fn is_removable(data: &[u8], w: usize, h: usize, x: usize, y: usize) -> bool {
    let p = ring(data, w, h, x, y);
    p.iter().sum::<u8>() >= 2 && is_simple(&p)
}

/// Count of set 8-neighbours of each pixel.
pub fn neighbor_counts(data: &[u8], w: usize, h: usize) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = ring(data, w, h, x, y).iter().sum();
        }
    }
    out
}
