//! Arithmetic in GF(2^8) with the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1.

const POLY: u16 = 0x11d;

const fn build_exp_log() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    // Doubled so that exp[log a + log b] never needs a modulo.
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    (exp, log)
}

const EXP_LOG: ([u8; 512], [u8; 256]) = build_exp_log();
static EXP: [u8; 512] = EXP_LOG.0;
static LOG: [u8; 256] = EXP_LOG.1;

const fn build_mul_table() -> [[u8; 256]; 256] {
    let (exp, log) = build_exp_log();
    let mut table = [[0u8; 256]; 256];
    let mut a = 1;
    while a < 256 {
        let mut b = 1;
        while b < 256 {
            table[a][b] = exp[log[a] as usize + log[b] as usize];
            b += 1;
        }
        a += 1;
    }
    table
}

static MUL: [[u8; 256]; 256] = build_mul_table();

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    MUL[a as usize][b as usize]
}

/// Multiplicative inverse. Panics on zero.
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(2^8)");
    EXP[255 - LOG[a as usize] as usize]
}

/// `out[i] ^= coef * input[i]` over the whole slice.
pub fn mul_add_slice(coef: u8, input: &[u8], out: &mut [u8]) {
    debug_assert_eq!(input.len(), out.len());
    match coef {
        0 => {}
        1 => {
            for (o, i) in out.iter_mut().zip(input) {
                *o ^= *i;
            }
        }
        c => {
            let row = &MUL[c as usize];
            for (o, i) in out.iter_mut().zip(input) {
                *o ^= row[*i as usize];
            }
        }
    }
}

/// Inverts a square matrix in place by Gauss-Jordan elimination. Returns
/// `None` when the matrix is singular.
pub fn invert(mut m: Vec<Vec<u8>>) -> Option<Vec<Vec<u8>>> {
    let size = m.len();
    let mut out: Vec<Vec<u8>> = (0..size)
        .map(|r| (0..size).map(|c| u8::from(r == c)).collect())
        .collect();
    for col in 0..size {
        let pivot = (col..size).find(|&r| m[r][col] != 0)?;
        m.swap(col, pivot);
        out.swap(col, pivot);
        let scale = inv(m[col][col]);
        for c in 0..size {
            m[col][c] = mul(m[col][c], scale);
            out[col][c] = mul(out[col][c], scale);
        }
        for r in 0..size {
            if r != col && m[r][col] != 0 {
                let factor = m[r][col];
                for c in 0..size {
                    m[r][c] ^= mul(factor, m[col][c]);
                    out[r][c] ^= mul(factor, out[col][c]);
                }
            }
        }
    }
    Some(out)
}
