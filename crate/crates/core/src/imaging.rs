//! Bayer demosaicing, color conversion, cropping, augmentation and PNM I/O.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::CoreError;

/// Planar image with one `P` per pixel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<P> {
    width: usize,
    height: usize,
    pixels: Vec<P>,
}

/// Single-channel image with values in `[0, 1]`.
pub type GrayImage = Image<f64>;
/// Three-channel `(R, G, B)` image with values in `[0, 1]`.
pub type RgbImage = Image<[f64; 3]>;

impl<P: Copy> Image<P> {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<P>) -> Result<Self, CoreError> {
        if width * height != pixels.len() {
            return Err(CoreError::Contract(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: P) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> P) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[P] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [P] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<P> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: P) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn map<Q: Copy>(&self, f: impl Fn(P) -> Q) -> Image<Q> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}

impl GrayImage {
    /// Replicates the gray value into three equal channels.
    pub fn to_rgb(&self) -> RgbImage {
        self.map(|v| [v, v, v])
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len().max(1) as f64
    }

    pub fn clamped(&self) -> GrayImage {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Gray as the HSI intensity `(R+G+B)/3`.
pub fn rgb_to_gray(img: &RgbImage) -> GrayImage {
    img.map(|[r, g, b]| (r + g + b) / 3.0)
}

/// Which color a Bayer site samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfaColor {
    Red,
    /// Green site sharing its row with red samples.
    GreenOnRedRow,
    /// Green site sharing its row with blue samples.
    GreenOnBlueRow,
    Blue,
}

/// Position of the red site inside the 2×2 tile; `(0, 0)` is RGGB.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CfaOffset {
    pub row: usize,
    pub col: usize,
}

impl CfaOffset {
    pub const RGGB: CfaOffset = CfaOffset { row: 0, col: 0 };

    pub fn color_at(self, x: usize, y: usize) -> CfaColor {
        let red_row = y % 2 == self.row % 2;
        let red_col = x % 2 == self.col % 2;
        match (red_row, red_col) {
            (true, true) => CfaColor::Red,
            (true, false) => CfaColor::GreenOnRedRow,
            (false, true) => CfaColor::GreenOnBlueRow,
            (false, false) => CfaColor::Blue,
        }
    }
}

/// Raw color-filter-array capture.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerImage {
    width: usize,
    height: usize,
    values: Vec<u16>,
    bit_depth: u32,
    pub pattern: CfaOffset,
}

impl BayerImage {
    pub fn new(width: usize, height: usize, values: Vec<u16>, bit_depth: u32) -> Result<Self, CoreError> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(CoreError::Contract(format!(
                "Bayer extent must be even and non-empty, got {width}x{height}"
            )));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(CoreError::Contract(format!("unsupported bit depth {bit_depth}")));
        }
        if values.len() != width * height {
            return Err(CoreError::Contract(format!(
                "{width}x{height} Bayer image needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        let max = max_value(bit_depth);
        if let Some(v) = values.iter().find(|&&v| u32::from(v) > max) {
            return Err(CoreError::Contract(format!("value {v} exceeds {bit_depth}-bit range")));
        }
        Ok(Self {
            width,
            height,
            values,
            bit_depth,
            pattern: CfaOffset::RGGB,
        })
    }

    pub fn with_pattern(mut self, pattern: CfaOffset) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn max_value(&self) -> u32 {
        max_value(self.bit_depth)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.values[y * self.width + x]
    }

    /// Sample with reflect-101 padding (`-1 → 1`, `n → n-2`), which keeps the
    /// CFA parity of the mirrored site.
    #[inline]
    fn reflected(&self, x: isize, y: isize) -> u32 {
        u32::from(self.get(reflect(x, self.width), reflect(y, self.height)))
    }
}

fn max_value(bit_depth: u32) -> u32 {
    (1u32 << bit_depth) - 1
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Bilinear demosaicing.
///
/// Red sites average the four axial neighbours for green and the four
/// diagonals for blue; blue sites mirror that. Green sites average the two
/// horizontal neighbours for the color on their own row and the two vertical
/// neighbours for the other one. Borders use reflect-101 padding.
pub fn demosaic_bilinear(b: &BayerImage) -> RgbImage {
    let max = f64::from(b.max_value());
    RgbImage::from_fn(b.width, b.height, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let at = |dx: isize, dy: isize| b.reflected(xi + dx, yi + dy);
        let centre = f64::from(at(0, 0));
        let cross = f64::from(at(-1, 0) + at(1, 0) + at(0, -1) + at(0, 1)) / 4.0;
        let diag = f64::from(at(-1, -1) + at(1, 1) + at(-1, 1) + at(1, -1)) / 4.0;
        let horiz = f64::from(at(-1, 0) + at(1, 0)) / 2.0;
        let vert = f64::from(at(0, -1) + at(0, 1)) / 2.0;
        let [r, g, bl] = match b.pattern.color_at(x, y) {
            CfaColor::Red => [centre, cross, diag],
            CfaColor::Blue => [diag, cross, centre],
            CfaColor::GreenOnRedRow => [horiz, centre, vert],
            CfaColor::GreenOnBlueRow => [vert, centre, horiz],
        };
        [r / max, g / max, bl / max]
    })
}

/// Samples one channel per site following the Bayer layout, quantized to
/// `bit_depth` bits.
pub fn mosaic(img: &RgbImage, bit_depth: u32, pattern: CfaOffset) -> Result<BayerImage, CoreError> {
    let max = f64::from(max_value(bit_depth.clamp(1, 16)));
    let mut values = Vec::with_capacity(img.width * img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let [r, g, b] = img.get(x, y);
            let v = match pattern.color_at(x, y) {
                CfaColor::Red => r,
                CfaColor::Blue => b,
                _ => g,
            };
            values.push((v.clamp(0.0, 1.0) * max).round() as u16);
        }
    }
    Ok(BayerImage::new(img.width, img.height, values, bit_depth)?.with_pattern(pattern))
}

/// Centered `size×size` window; offsets `floor((dim - size) / 2)`.
pub fn center_crop<P: Copy>(img: &Image<P>, size: usize) -> Result<Image<P>, CoreError> {
    if size == 0 || size > img.width || size > img.height {
        return Err(CoreError::Contract(format!(
            "cannot crop {}x{} to {size}x{size}",
            img.width, img.height
        )));
    }
    let x0 = (img.width - size) / 2;
    let y0 = (img.height - size) / 2;
    Ok(Image::from_fn(size, size, |x, y| img.get(x0 + x, y0 + y)))
}

/// Dihedral augmentations; rotations are clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Augment {
    Identity,
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
}

impl Augment {
    pub const ALL: [Augment; 6] = [
        Augment::Identity,
        Augment::FlipH,
        Augment::FlipV,
        Augment::Rot90,
        Augment::Rot180,
        Augment::Rot270,
    ];

    pub fn apply<P: Copy>(self, img: &Image<P>) -> Image<P> {
        let (w, h) = (img.width, img.height);
        match self {
            Augment::Identity => img.clone(),
            Augment::FlipH => Image::from_fn(w, h, |x, y| img.get(w - 1 - x, y)),
            Augment::FlipV => Image::from_fn(w, h, |x, y| img.get(x, h - 1 - y)),
            Augment::Rot180 => Image::from_fn(w, h, |x, y| img.get(w - 1 - x, h - 1 - y)),
            Augment::Rot90 => Image::from_fn(h, w, |x, y| img.get(y, h - 1 - x)),
            Augment::Rot270 => Image::from_fn(h, w, |x, y| img.get(w - 1 - y, x)),
        }
    }
}

/// Exposure used for the low-light capture of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExposureTag {
    Us156,
    Us1248,
}

impl fmt::Display for ExposureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExposureTag::Us156 => "156us",
            ExposureTag::Us1248 => "1248us",
        })
    }
}

impl FromStr for ExposureTag {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "156us" => Ok(ExposureTag::Us156),
            "1248us" => Ok(ExposureTag::Us1248),
            other => Err(CoreError::Data(format!("unknown exposure tag {other:?}"))),
        }
    }
}

/// Registered low/normal-light pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub low: GrayImage,
    pub high: GrayImage,
    pub stratum: u32,
    pub exposure: ExposureTag,
}

impl ImagePair {
    pub fn new(low: GrayImage, high: GrayImage, stratum: u32, exposure: ExposureTag) -> Result<Self, CoreError> {
        if (low.width, low.height) != (high.width, high.height) {
            return Err(CoreError::Contract(format!(
                "pair extents differ: {}x{} vs {}x{}",
                low.width, low.height, high.width, high.height
            )));
        }
        Ok(Self {
            low,
            high,
            stratum,
            exposure,
        })
    }

    pub fn augment(&self, op: Augment) -> ImagePair {
        ImagePair {
            low: op.apply(&self.low),
            high: op.apply(&self.high),
            stratum: self.stratum,
            exposure: self.exposure,
        }
    }
}

/// One manifest line: `low<TAB>high<TAB>stratum<TAB>exposure`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub low: String,
    pub high: String,
    pub stratum: u32,
    pub exposure: ExposureTag,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, CoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(CoreError::Data(format!(
                    "manifest line {}: expected 4 tab-separated fields, got {}",
                    i + 1,
                    cols.len()
                )));
            }
            let stratum = cols[2]
                .trim()
                .parse()
                .map_err(|_| CoreError::Data(format!("manifest line {}: bad stratum {:?}", i + 1, cols[2])))?;
            Ok(ManifestEntry {
                low: cols[0].to_string(),
                high: cols[1].to_string(),
                stratum,
                exposure: cols[3].trim().parse()?,
            })
        })
        .collect()
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\t{}\n", e.low, e.high, e.stratum, e.exposure))
        .collect()
}

/// Raw PNM raster: one (P5) or three (P6) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String, CoreError> {
    let mut tok = String::new();
    loop {
        let mut byte = [0u8];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c as char);
    }
    if tok.is_empty() {
        return Err(CoreError::Data("truncated PNM header".into()));
    }
    Ok(tok)
}

fn header_number<R: BufRead>(r: &mut R, what: &str) -> Result<usize, CoreError> {
    let tok = read_token(r)?;
    tok.parse()
        .map_err(|_| CoreError::Data(format!("bad PNM {what}: {tok:?}")))
}

impl Pnm {
    pub fn read<R: BufRead>(mut r: R) -> Result<Self, CoreError> {
        let mut magic = [0u8; 2];
        r.read_exact(&mut magic)
            .map_err(|_| CoreError::Data("missing PNM magic".into()))?;
        let channels = match &magic {
            b"P5" => 1,
            b"P6" => 3,
            _ => return Err(CoreError::Data(format!("unsupported PNM magic {magic:?}"))),
        };
        let width = header_number(&mut r, "width")?;
        let height = header_number(&mut r, "height")?;
        let maxval = header_number(&mut r, "maxval")?;
        if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
            return Err(CoreError::Data(format!("bad PNM header {width}x{height} maxval {maxval}")));
        }
        let n = width * height * channels;
        let wide = maxval > 255;
        let mut raw = vec![0u8; if wide { 2 * n } else { n }];
        r.read_exact(&mut raw)
            .map_err(|_| CoreError::Data("truncated PNM raster".into()))?;
        let samples: Vec<u16> = if wide {
            raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            raw.into_iter().map(u16::from).collect()
        };
        if samples.iter().any(|&s| usize::from(s) > maxval) {
            return Err(CoreError::Data("PNM sample exceeds maxval".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval: maxval as u16,
            samples,
        })
    }

    /// Canonical header `P5\n<w> <h>\n<maxval>\n`, then big-endian samples.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CoreError> {
        let magic = match self.channels {
            1 => "P5",
            3 => "P6",
            c => return Err(CoreError::Contract(format!("PNM with {c} channels"))),
        };
        if self.maxval == 0 || self.samples.len() != self.width * self.height * self.channels {
            return Err(CoreError::Contract("inconsistent PNM raster".into()));
        }
        write!(w, "{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval)?;
        if self.maxval > 255 {
            let mut raw = Vec::with_capacity(2 * self.samples.len());
            for s in &self.samples {
                raw.extend_from_slice(&s.to_be_bytes());
            }
            w.write_all(&raw)?;
        } else {
            let raw: Vec<u8> = self.samples.iter().map(|&s| s as u8).collect();
            w.write_all(&raw)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_gray(img: &GrayImage, maxval: u16) -> Self {
        let m = f64::from(maxval);
        Self {
            width: img.width,
            height: img.height,
            channels: 1,
            maxval,
            samples: img.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * m).round() as u16).collect(),
        }
    }

    pub fn from_rgb(img: &RgbImage, maxval: u16) -> Self {
        let m = f64::from(maxval);
        Self {
            width: img.width,
            height: img.height,
            channels: 3,
            maxval,
            samples: img
                .pixels
                .iter()
                .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * m).round() as u16))
                .collect(),
        }
    }

    pub fn to_gray(&self) -> Result<GrayImage, CoreError> {
        let m = f64::from(self.maxval);
        match self.channels {
            1 => GrayImage::from_pixels(self.width, self.height, self.samples.iter().map(|&s| f64::from(s) / m).collect()),
            3 => Ok(rgb_to_gray(&self.to_rgb()?)),
            c => Err(CoreError::Data(format!("PNM with {c} channels"))),
        }
    }

    pub fn to_rgb(&self) -> Result<RgbImage, CoreError> {
        let m = f64::from(self.maxval);
        match self.channels {
            1 => Ok(self.to_gray()?.to_rgb()),
            3 => RgbImage::from_pixels(
                self.width,
                self.height,
                self.samples
                    .chunks_exact(3)
                    .map(|c| [f64::from(c[0]) / m, f64::from(c[1]) / m, f64::from(c[2]) / m])
                    .collect(),
            ),
            c => Err(CoreError::Data(format!("PNM with {c} channels"))),
        }
    }

    /// Interprets a single-channel raster as an RGGB Bayer capture whose
    /// bit depth is implied by `maxval`.
    pub fn to_bayer(&self) -> Result<BayerImage, CoreError> {
        if self.channels != 1 {
            return Err(CoreError::Data("Bayer input must be a single-channel PGM".into()));
        }
        let bits = 16 - self.maxval.leading_zeros();
        BayerImage::new(self.width, self.height, self.samples.clone(), bits)
    }
}

pub fn read_gray(path: &std::path::Path) -> Result<GrayImage, CoreError> {
    let f = std::fs::File::open(path).map_err(|e| CoreError::Data(format!("{}: {e}", path.display())))?;
    Pnm::read(std::io::BufReader::new(f))?.to_gray()
}

pub fn read_rgb(path: &std::path::Path) -> Result<RgbImage, CoreError> {
    let f = std::fs::File::open(path).map_err(|e| CoreError::Data(format!("{}: {e}", path.display())))?;
    Pnm::read(std::io::BufReader::new(f))?.to_rgb()
}

pub fn write_pnm(path: &std::path::Path, pnm: &Pnm) -> Result<(), CoreError> {
    let f = std::fs::File::create(path).map_err(|e| CoreError::Data(format!("{}: {e}", path.display())))?;
    pnm.write(std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (x + w * y) as f64 / (w * h) as f64)
    }

    #[test]
    fn odd_bayer_extent_is_rejected() {
        assert!(matches!(BayerImage::new(3, 4, vec![0; 12], 8), Err(CoreError::Contract(_))));
        assert!(BayerImage::new(4, 4, vec![256; 16], 8).is_err());
    }

    #[test]
    fn constant_bayer_demosaics_to_gray() {
        let b = BayerImage::new(6, 4, vec![200; 24], 8).unwrap();
        let rgb = demosaic_bilinear(&b);
        let v = 200.0 / 255.0;
        assert!(rgb.pixels().iter().all(|p| *p == [v, v, v]));
        assert_eq!(mosaic(&rgb, 8, CfaOffset::RGGB).unwrap(), b);
    }

    #[test]
    fn hand_computed_four_by_four() {
        // RGGB layout, values 1..=16 row-major.
        let b = BayerImage::new(4, 4, (1..=16).collect(), 8).unwrap();
        let rgb = demosaic_bilinear(&b);
        let s = |v: f64| v / 255.0;
        // (1,1) is blue: R diagonals 1,3,9,11; G cross 2,5,7,10; B itself 6.
        assert_eq!(rgb.get(1, 1), [s(6.0), s(6.0), s(6.0)]);
        // (2,2) is red (11): G from 7,10,12,15; B from 6,8,14,16.
        assert_eq!(rgb.get(2, 2), [s(11.0), s(11.0), s(11.0)]);
        // (1,2) is green on a red row (10): R from 9,11; B from 6,14.
        assert_eq!(rgb.get(1, 2), [s(10.0), s(10.0), s(10.0)]);
        // (2,1) is green on a blue row (7): R from 3,11; B from 6,8.
        assert_eq!(rgb.get(2, 1), [s(7.0), s(7.0), s(7.0)]);
        // A non-linear pattern separates the channels.
        let vals = vec![10, 0, 20, 0, 0, 40, 0, 80, 30, 0, 50, 0, 0, 120, 0, 160];
        let rgb = demosaic_bilinear(&BayerImage::new(4, 4, vals, 8).unwrap());
        assert_eq!(rgb.get(1, 1), [s((10.0 + 20.0 + 30.0 + 50.0) / 4.0), s(0.0), s(40.0)]);
        assert_eq!(rgb.get(2, 2), [s(50.0), s(0.0), s((40.0 + 80.0 + 120.0 + 160.0) / 4.0)]);
        assert_eq!(rgb.get(1, 2), [s((30.0 + 50.0) / 2.0), s(0.0), s((40.0 + 120.0) / 2.0)]);
        assert_eq!(rgb.get(2, 1), [s((20.0 + 50.0) / 2.0), s(0.0), s((40.0 + 80.0) / 2.0)]);
    }

    #[test]
    fn mosaic_of_pure_red() {
        let img = RgbImage::filled(4, 4, [0.5, 0.0, 0.0]);
        let b = mosaic(&img, 8, CfaOffset::RGGB).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if x % 2 == 0 && y % 2 == 0 { 128 } else { 0 };
                assert_eq!(b.get(x, y), expect);
            }
        }
    }

    #[test]
    fn shifted_pattern_moves_red_site() {
        let off = CfaOffset { row: 1, col: 0 };
        assert_eq!(off.color_at(0, 1), CfaColor::Red);
        assert_eq!(off.color_at(1, 0), CfaColor::Blue);
        assert_eq!(off.color_at(1, 1), CfaColor::GreenOnRedRow);
    }

    #[test]
    fn gray_conversion() {
        let img = RgbImage::from_pixels(3, 1, vec![[0.0; 3], [1.0; 3], [0.3, 0.6, 0.9]]).unwrap();
        let g = rgb_to_gray(&img);
        assert_eq!(g.get(0, 0), 0.0);
        assert_eq!(g.get(1, 0), 1.0);
        assert!((g.get(2, 0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn crop_offsets() {
        let img = ramp(6, 6);
        assert_eq!(center_crop(&img, 6).unwrap(), img);
        let c = center_crop(&img, 4).unwrap();
        assert_eq!(c.get(0, 0), img.get(1, 1));
        assert_eq!(c.get(3, 3), img.get(4, 4));
        // 7 - 4 = 3 leaves one more column on the right.
        let c = center_crop(&ramp(7, 5), 4).unwrap();
        assert_eq!(c.get(0, 0), ramp(7, 5).get(1, 0));
        assert!(center_crop(&img, 7).is_err());
    }

    #[test]
    fn dihedral_relations() {
        let img = ramp(5, 3);
        let r90 = Augment::Rot90.apply(&img);
        assert_eq!((r90.width(), r90.height()), (3, 5));
        assert_eq!(Augment::Rot180.apply(&Augment::Rot180.apply(&img)), img);
        assert_eq!(Augment::FlipH.apply(&Augment::FlipH.apply(&img)), img);
        assert_eq!(Augment::FlipV.apply(&Augment::FlipH.apply(&img)), Augment::Rot180.apply(&img));
        assert_eq!(Augment::Rot90.apply(&r90), Augment::Rot180.apply(&img));
        assert_eq!(Augment::Rot270.apply(&r90), img);
    }

    #[test]
    fn rot90_moves_marked_corner_clockwise() {
        let mut img = GrayImage::filled(4, 3, 0.0);
        img.set(0, 0, 1.0);
        let r = Augment::Rot90.apply(&img);
        // top-left goes to top-right under a clockwise quarter turn
        assert_eq!(r.get(r.width() - 1, 0), 1.0);
        assert_eq!(r.pixels().iter().filter(|&&v| v == 1.0).count(), 1);
    }

    #[test]
    fn pair_augment_applies_to_both() {
        let pair = ImagePair::new(ramp(4, 4), ramp(4, 4).map(|v| 1.0 - v), 3, ExposureTag::Us1248).unwrap();
        let a = pair.augment(Augment::Rot270);
        assert_eq!(a.low, Augment::Rot270.apply(&pair.low));
        assert_eq!(a.high, Augment::Rot270.apply(&pair.high));
        assert!(ImagePair::new(ramp(4, 4), ramp(4, 2), 0, ExposureTag::Us156).is_err());
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let text = "a.pgm\tb.pgm\t3\t1248us\nc.pgm\td.pgm\t0\t156us\n";
        let entries = parse_manifest(text).unwrap();
        assert_eq!(entries[0].stratum, 3);
        assert_eq!(format_manifest(&entries), text);
        assert!(parse_manifest("a\tb\t1\n").is_err());
        assert!(parse_manifest("a\tb\tx\t156us\n").is_err());
        assert!(parse_manifest("a\tb\t1\t100us\n").is_err());
    }

    #[test]
    fn pnm_depth_follows_maxval() {
        let img = ramp(3, 2);
        let mut eight = Vec::new();
        Pnm::from_gray(&img, 255).write(&mut eight).unwrap();
        let mut sixteen = Vec::new();
        Pnm::from_gray(&img, 65535).write(&mut sixteen).unwrap();
        assert_eq!(eight.len(), "P5\n3 2\n255\n".len() + 6);
        assert_eq!(sixteen.len(), "P5\n3 2\n65535\n".len() + 12);
    }

    #[test]
    fn pnm_rejects_bad_magic_and_truncation() {
        assert!(matches!(Pnm::read(&b"P2\n1 1\n255\n0"[..]), Err(CoreError::Data(_))));
        assert!(Pnm::read(&b"P5\n2 2\n255\n\0\0"[..]).is_err());
        assert!(Pnm::read(&b"P5\n1 1\n10\n\x20"[..]).is_err());
    }

    #[test]
    fn pnm_header_comments_are_skipped() {
        let p = Pnm::read(&b"P5\n# comment\n2 1\n255\n\x01\x02"[..]).unwrap();
        assert_eq!(p.samples, vec![1, 2]);
    }
}
