//! Bundled parser programs and the witness inputs they were analyzed with.

use crate::vm::{assemble, Program};

pub const SUM_CSV: &str = include_str!("../programs/sum_csv.tasm");
pub const BMP: &str = include_str!("../programs/bmp.tasm");
pub const PNG_SIG: &str = include_str!("../programs/png_sig.tasm");

pub fn load(text: &str) -> Program {
    assemble(text).expect("bundled program assembles")
}

pub const SUM_CSV_INPUT: &[u8] = b"4,3,2,5,8\n";
pub const PNG_SIG_INPUT: &[u8] = b"\x89PNG\r\n\x1a\n";

/// 5x3 bitmap, 24 bits per pixel, pixels right after the headers.
pub fn bmp_input() -> Vec<u8> {
    let (w, h) = (5u32, 3u32);
    let pixels: Vec<u8> = (0..w * h * 3).map(|i| (i * 37 % 251) as u8).collect();
    let mut out = Vec::new();
    out.extend_from_slice(b"BM");
    out.extend_from_slice(&(54 + pixels.len() as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&54u32.to_le_bytes());
    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&[0x13, 0x0B, 0, 0, 0x13, 0x0B, 0, 0, 0x13, 0x0B, 0, 0]);
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&pixels);
    out
}

pub struct Fixture {
    pub name: &'static str,
    pub source: &'static str,
    pub witness: Vec<u8>,
}

impl Fixture {
    pub fn program(&self) -> Program {
        load(self.source)
    }
}

fn pe_input() -> Vec<u8> {
    let strings: [&[u8]; 3] = [b"hello", b"ab", b".text\x01section"];
    let table_len = strings.len() * 8 + 4;
    let mut table = Vec::new();
    let mut data = Vec::new();
    for s in strings {
        table.extend_from_slice(&((table_len + data.len()) as u32).to_le_bytes());
        table.extend_from_slice(&(s.len() as u32).to_le_bytes());
        data.extend_from_slice(s);
        data.push(0);
    }
    table.extend_from_slice(&0u32.to_le_bytes());
    table.extend(data);
    table
}

fn png2_input() -> Vec<u8> {
    fn s(out: &mut Vec<u8>, bytes: &[u8]) {
        out.push(bytes.len() as u8);
        out.extend_from_slice(bytes);
    }
    let mut out = Vec::new();
    out.push(1);
    s(&mut out, b"IHDR\x07data");
    out.push(2);
    s(&mut out, b"tEXt");
    s(&mut out, b"Comment: a longer value\x02");
    out.push(1);
    s(&mut out, b"gAMA\x1b");
    out.push(3);
    out.extend_from_slice(&[0x10, 0x27]);
    s(&mut out, b"pHYs");
    out.push(2);
    s(&mut out, b"Author");
    s(&mut out, b"nobody\x03");
    out.push(3);
    out.extend_from_slice(&[0x05, 0x00]);
    s(&mut out, b"sRGB chunk body\x04\x05");
    out.push(1);
    s(&mut out, b"IEND");
    out
}

fn bmp_csv_input() -> Vec<u8> {
    let mut out = b"BM,7,2,4\n10;200;3;45;\n".to_vec();
    for i in 0..14u32 {
        out.extend_from_slice(format!("{};", (i * 7 + 3) % 4 * 10 + i % 3).as_bytes());
    }
    out.push(b'\n');
    out
}

/// The synthetic suite: program text and a witness input for each.
pub fn suite() -> Vec<Fixture> {
    vec![
        Fixture { name: "CSV", source: include_str!("../programs/csv.tasm"), witness: b"12,5,300\n7,88\n41,2,9,100\n".to_vec() },
        Fixture {
            name: "CSV_Array",
            source: include_str!("../programs/csv_array.tasm"),
            witness: b"3,10,200,3\n2,5,66\n4,1,22,333,4\n".to_vec(),
        },
        Fixture {
            name: "CSV_Nested_Array",
            source: include_str!("../programs/csv_nested_array.tasm"),
            witness: b"3\n2,10,5\n3,7,81,9\n1,42\n".to_vec(),
        },
        Fixture {
            name: "CSV_Recursive_001",
            source: include_str!("../programs/csv_recursive_001.tasm"),
            witness: b"8,13,400\n6,92\n55,1,7,230\n".to_vec(),
        },
        Fixture {
            name: "CSV_Array_Recursive",
            source: include_str!("../programs/csv_array_recursive.tasm"),
            witness: b"3,10,200,3\n2,5,66\n4,1,22,333,4\n".to_vec(),
        },
        Fixture {
            name: "HTTP",
            source: include_str!("../programs/http.tasm"),
            witness: b"GET /index.html HTTP/1.1\r\nHost: example.com\r\nUser-Agent: demo/2.0\r\nAccept: text/html\r\n\r\n".to_vec(),
        },
        Fixture { name: "BMP_CSV", source: include_str!("../programs/bmp_csv.tasm"), witness: bmp_csv_input() },
        Fixture { name: "PE", source: include_str!("../programs/pe.tasm"), witness: pe_input() },
        Fixture { name: "PNG-2", source: include_str!("../programs/png2.tasm"), witness: png2_input() },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::{accepts, VmConfig};

    #[test]
    fn witnesses_are_accepted() {
        let c = VmConfig::default();
        assert!(accepts(&load(SUM_CSV), SUM_CSV_INPUT, &c).status.accepted());
        assert!(accepts(&load(BMP), &bmp_input(), &c).status.accepted());
        assert!(accepts(&load(PNG_SIG), PNG_SIG_INPUT, &c).status.accepted());
        for f in suite() {
            let out = accepts(&f.program(), &f.witness, &c);
            assert!(out.status.accepted(), "{}: {:?}", f.name, out.status);
        }
    }
}
