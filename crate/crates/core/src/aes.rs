//! AES-128 encryption in the four-table formulation.
//!
//! The state is kept as four big-endian column words (row 0 in the most
//! significant byte), the FIPS-197 column-major layout. Every table lookup
//! is reported to a caller-supplied sink so that the cache model can replay
//! the victim's memory trace.
//!
//! Main rounds compute each output column as
//! `T0[s(0,j)] ^ T1[s(1,j+1)] ^ T2[s(2,j+2)] ^ T3[s(3,j+3)] ^ rk`.
//! The last round reuses the same tables and keeps only the S-box lane:
//! output row `i` is looked up in table `(i + 2) % 4`, whose lane `i` holds
//! the plain S-box value.

use std::fmt;
use std::sync::OnceLock;

pub mod reference;

/// Number of entries in each T-table.
pub const TABLE_ENTRIES: usize = 256;
/// Bytes per T-table entry.
pub const ENTRY_BYTES: usize = 4;
/// Bytes spanned by one T-table.
pub const TABLE_BYTES: usize = TABLE_ENTRIES * ENTRY_BYTES;
/// Bytes spanned by all four T-tables laid out back to back.
pub const TABLE_REGION_BYTES: usize = 4 * TABLE_BYTES;
/// Table lookups performed by one block encryption (16 per round, 10 rounds).
pub const LOOKUPS_PER_BLOCK: usize = 160;

pub(crate) const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

pub(crate) fn xtime(b: u8) -> u8 {
    (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0 }
}

/// A 128-bit AES key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AesKey(pub [u8; 16]);

impl AesKey {
    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// Parses 32 hex digits.
    pub fn from_hex(s: &str) -> Option<Self> {
        parse_hex16(s).map(AesKey)
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }
}

impl fmt::Debug for AesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AesKey({})", self.to_hex())
    }
}

/// One 16-byte AES state, plaintext or ciphertext.
///
/// Byte `4 * col + row` holds state element `s(row, col)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Block(pub [u8; 16]);

impl Block {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[4 * col + row]
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        parse_hex16(s).map(Block)
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }

    fn to_words(self) -> [u32; 4] {
        let b = self.0;
        std::array::from_fn(|c| u32::from_be_bytes([b[4 * c], b[4 * c + 1], b[4 * c + 2], b[4 * c + 3]]))
    }

    fn from_words(w: [u32; 4]) -> Self {
        let mut out = [0u8; 16];
        for (c, word) in w.iter().enumerate() {
            out[4 * c..4 * c + 4].copy_from_slice(&word.to_be_bytes());
        }
        Block(out)
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", self.to_hex())
    }
}

/// The eleven round keys of AES-128, `rounds[0]` being the master key.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RoundKeys {
    pub rounds: [[u8; 16]; 11],
}

impl RoundKeys {
    pub fn last(&self) -> [u8; 16] {
        self.rounds[10]
    }

    fn words(&self, round: usize) -> [u32; 4] {
        Block(self.rounds[round]).to_words()
    }
}

/// A single T-table lookup issued by the cipher.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AccessEvent {
    pub table: u8,
    pub entry: u8,
}

impl AccessEvent {
    /// Offset of the entry inside its own table.
    pub fn byte_offset(&self) -> usize {
        self.entry as usize * ENTRY_BYTES
    }

    /// Offset inside the contiguous four-table region.
    pub fn region_offset(&self) -> usize {
        self.table as usize * TABLE_BYTES + self.byte_offset()
    }

    /// Cache line of the entry within its table, for a given line size.
    pub fn line(&self, line_size: usize) -> usize {
        self.byte_offset() / line_size
    }

    pub fn from_byte_offset(table: u8, byte_offset: usize) -> Self {
        debug_assert!(byte_offset < TABLE_BYTES && byte_offset.is_multiple_of(ENTRY_BYTES));
        AccessEvent { table, entry: (byte_offset / ENTRY_BYTES) as u8 }
    }
}

/// The four encryption tables. `tables[k]` is `tables[0]` rotated right by
/// `8 * k` bits.
#[derive(Clone, PartialEq, Eq)]
pub struct TTables {
    pub tables: [[u32; TABLE_ENTRIES]; 4],
}

impl fmt::Debug for TTables {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TTables").field("t0[0]", &format_args!("{:08x}", self.tables[0][0])).finish()
    }
}

/// Builds the four standard encryption T-tables from the S-box.
pub fn derive_ttables() -> TTables {
    let mut tables = [[0u32; TABLE_ENTRIES]; 4];
    for x in 0..TABLE_ENTRIES {
        let s = SBOX[x];
        let s2 = xtime(s);
        let s3 = s2 ^ s;
        let t0 = u32::from_be_bytes([s2, s, s, s3]);
        for (k, table) in tables.iter_mut().enumerate() {
            table[x] = t0.rotate_right(8 * k as u32);
        }
    }
    TTables { tables }
}

/// Process-wide table instance.
pub fn ttables() -> &'static TTables {
    static TABLES: OnceLock<TTables> = OnceLock::new();
    TABLES.get_or_init(derive_ttables)
}

impl TTables {
    /// Byte lane `row` (0 = most significant) of `tables[table][entry]`.
    pub fn lane(&self, table: usize, entry: usize, row: usize) -> u8 {
        (self.tables[table][entry] >> (24 - 8 * row)) as u8
    }

    /// Encrypts one block, reporting all 160 table lookups in execution order.
    pub fn encrypt_block<F>(&self, pt: &Block, rk: &RoundKeys, mut sink: F) -> Block
    where
        F: FnMut(AccessEvent),
    {
        let k0 = rk.words(0);
        let mut s = pt.to_words();
        for c in 0..4 {
            s[c] ^= k0[c];
        }

        let mut look = |table: usize, idx: u32| -> u32 {
            let entry = (idx & 0xff) as u8;
            sink(AccessEvent { table: table as u8, entry });
            self.tables[table][entry as usize]
        };

        for round in 1..10 {
            let k = rk.words(round);
            let mut t = [0u32; 4];
            for j in 0..4 {
                t[j] = look(0, s[j] >> 24)
                    ^ look(1, s[(j + 1) % 4] >> 16)
                    ^ look(2, s[(j + 2) % 4] >> 8)
                    ^ look(3, s[(j + 3) % 4])
                    ^ k[j];
            }
            s = t;
        }

        let k = rk.words(10);
        let mut out = [0u32; 4];
        for j in 0..4 {
            out[j] = (look(2, s[j] >> 24) & 0xff00_0000)
                ^ (look(3, s[(j + 1) % 4] >> 16) & 0x00ff_0000)
                ^ (look(0, s[(j + 2) % 4] >> 8) & 0x0000_ff00)
                ^ (look(1, s[(j + 3) % 4]) & 0x0000_00ff)
                ^ k[j];
        }
        Block::from_words(out)
    }
}

/// Encrypts with the shared T-tables.
pub fn encrypt_block<F>(pt: &Block, rk: &RoundKeys, sink: F) -> Block
where
    F: FnMut(AccessEvent),
{
    ttables().encrypt_block(pt, rk, sink)
}

fn sub_rot(w: [u8; 4], rcon: u8) -> [u8; 4] {
    [SBOX[w[1] as usize] ^ rcon, SBOX[w[2] as usize], SBOX[w[3] as usize], SBOX[w[0] as usize]]
}

/// AES-128 key schedule.
pub fn key_expand(key: &AesKey) -> RoundKeys {
    let mut rounds = [[0u8; 16]; 11];
    rounds[0] = key.0;
    for r in 1..11 {
        let prev = rounds[r - 1];
        let mut next = [0u8; 16];
        let f = sub_rot([prev[12], prev[13], prev[14], prev[15]], RCON[r - 1]);
        for b in 0..4 {
            next[b] = prev[b] ^ f[b];
        }
        for b in 4..16 {
            next[b] = prev[b] ^ next[b - 4];
        }
        rounds[r] = next;
    }
    RoundKeys { rounds }
}

/// Runs the key schedule backwards from the round-10 key to the master key.
pub fn invert_key_schedule(last_round_key: &[u8; 16]) -> AesKey {
    let mut next = *last_round_key;
    for r in (1..11).rev() {
        let mut prev = [0u8; 16];
        for b in (4..16).rev() {
            prev[b] = next[b] ^ next[b - 4];
        }
        let f = sub_rot([prev[12], prev[13], prev[14], prev[15]], RCON[r - 1]);
        for b in 0..4 {
            prev[b] = next[b] ^ f[b];
        }
        next = prev;
    }
    AesKey(next)
}

fn parse_hex16(s: &str) -> Option<[u8; 16]> {
    let s = s.trim();
    if s.len() != 32 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 16];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
