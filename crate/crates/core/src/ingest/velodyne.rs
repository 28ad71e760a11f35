use super::{IngestError, Result};

const RECORD: usize = 16;

/// Velodyne scan: `(x, y, z, reflectance)` per point, meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 4]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Decodes little-endian `f32` quadruplets.
pub fn read_velodyne(bytes: &[u8]) -> Result<PointCloud> {
    let whole = bytes.len() / RECORD * RECORD;
    if whole != bytes.len() {
        return Err(IngestError::TruncatedRecord(whole));
    }
    let mut points = Vec::with_capacity(whole / RECORD);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let mut p = [0f32; 4];
        for (k, v) in p.iter_mut().enumerate() {
            *v = f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFinitePoint(i));
        }
        points.push(p);
    }
    Ok(PointCloud { points })
}

pub fn write_velodyne(cloud: &PointCloud) -> Vec<u8> {
    cloud
        .points
        .iter()
        .flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        // IEEE-754 single precision, little-endian, written out by hand
        let bytes = [
            0x00, 0x00, 0x80, 0x3f, // 1.0
            0x00, 0x00, 0x00, 0x40, // 2.0
            0x00, 0x00, 0x40, 0x40, // 3.0
            0x00, 0x00, 0x00, 0x3f, // 0.5
        ];
        let cloud = read_velodyne(&bytes).unwrap();
        assert_eq!(cloud.points, vec![[1.0, 2.0, 3.0, 0.5]]);
        assert_eq!(write_velodyne(&cloud), bytes);
    }

    #[test]
    fn empty() {
        assert!(read_velodyne(&[]).unwrap().is_empty());
    }

    #[test]
    fn truncated() {
        assert!(matches!(read_velodyne(&[0; 17]), Err(IngestError::TruncatedRecord(16))));
        assert!(matches!(read_velodyne(&[0; 3]), Err(IngestError::TruncatedRecord(0))));
    }

    #[test]
    fn non_finite() {
        let mut bytes = vec![0u8; 32];
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_velodyne(&bytes), Err(IngestError::NonFinitePoint(1))));
    }
}
