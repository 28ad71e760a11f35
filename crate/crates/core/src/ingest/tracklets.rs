use std::fmt::Write as _;

use roxmltree::{Document, Node, ParsingOptions};

use super::{IngestError, Result};

/// Per-frame box placement in the Velodyne frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackletPose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    /// Yaw about the Velodyne z axis, radians.
    pub rz: f64,
}

/// A tracked 3-D box. `poses[k]` belongs to frame `first_frame + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub object_type: String,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub first_frame: usize,
    pub poses: Vec<TrackletPose>,
}

impl Tracklet {
    pub fn last_frame(&self) -> usize {
        self.first_frame + self.poses.len() - 1
    }

    /// Pose at absolute frame index, if the tracklet covers it.
    pub fn pose_at(&self, frame: usize) -> Option<&TrackletPose> {
        frame.checked_sub(self.first_frame).and_then(|k| self.poses.get(k))
    }
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str, path: &str) -> Result<Node<'a, 'i>> {
    node.children()
        .find(|c| c.has_tag_name(name))
        .ok_or_else(|| IngestError::XmlStructure(format!("{path}/{name}")))
}

fn text<'a>(node: Node<'a, '_>, name: &str, path: &str) -> Result<&'a str> {
    Ok(child(node, name, path)?.text().unwrap_or("").trim())
}

fn number<T: std::str::FromStr>(node: Node, name: &str, path: &str) -> Result<T> {
    text(node, name, path)?
        .parse()
        .map_err(|_| IngestError::MalformedNumber(format!("{path}/{name}")))
}

fn items<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.has_tag_name("item"))
}

/// `<count>` must agree with the number of `<item>` children.
fn counted_items<'a, 'i>(node: Node<'a, 'i>, path: &str, label: &str) -> Result<Vec<Node<'a, 'i>>> {
    let declared: usize = number(node, "count", path)?;
    let found: Vec<_> = items(node).collect();
    if found.len() != declared {
        return Err(IngestError::XmlStructure(label.to_string()));
    }
    Ok(found)
}

fn positive(value: f64, path: String) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(IngestError::InvalidValue { path, reason: format!("{value} is not a positive size") })
    }
}

/// Parses a `tracklet_labels.xml` document.
pub fn parse_tracklets(xml: &str) -> Result<Vec<Tracklet>> {
    let opts = ParsingOptions { allow_dtd: true, ..ParsingOptions::default() };
    let doc = Document::parse_with_options(xml, opts)
        .map_err(|e| IngestError::XmlStructure(format!("document: {e}")))?;
    let root = doc
        .descendants()
        .find(|n| n.has_tag_name("tracklets"))
        .ok_or_else(|| IngestError::XmlStructure("tracklets".into()))?;

    let mut out = Vec::new();
    for (i, item) in counted_items(root, "tracklets", "tracklets")?.into_iter().enumerate() {
        let path = format!("tracklets/item[{i}]");
        let poses_node = child(item, "poses", &path)?;
        let ppath = format!("{path}/poses");
        let poses = counted_items(poses_node, &ppath, "poses")?
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                let pp = format!("{ppath}/item[{k}]");
                // rx and ry must be present and numeric even though they are dropped
                let _: f64 = number(p, "rx", &pp)?;
                let _: f64 = number(p, "ry", &pp)?;
                Ok(TrackletPose {
                    tx: number(p, "tx", &pp)?,
                    ty: number(p, "ty", &pp)?,
                    tz: number(p, "tz", &pp)?,
                    rz: number(p, "rz", &pp)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if poses.is_empty() {
            return Err(IngestError::XmlStructure(ppath));
        }
        out.push(Tracklet {
            object_type: text(item, "objectType", &path)?.to_string(),
            h: positive(number(item, "h", &path)?, format!("{path}/h"))?,
            w: positive(number(item, "w", &path)?, format!("{path}/w"))?,
            l: positive(number(item, "l", &path)?, format!("{path}/l"))?,
            first_frame: number(item, "first_frame", &path)?,
            poses,
        });
    }
    Ok(out)
}

/// Serialises tracklets in the devkit's boost-serialization layout.
pub fn format_tracklets(tracklets: &[Tracklet]) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\" ?>\n");
    s.push_str("<!DOCTYPE boost_serialization>\n");
    s.push_str("<boost_serialization signature=\"serialization::archive\" version=\"9\">\n");
    s.push_str("<tracklets class_id=\"0\" tracking_level=\"0\" version=\"0\">\n");
    let _ = writeln!(s, "\t<count>{}</count>", tracklets.len());
    s.push_str("\t<item_version>1</item_version>\n");
    for t in tracklets {
        s.push_str("\t<item class_id=\"1\" tracking_level=\"0\" version=\"1\">\n");
        let _ = writeln!(s, "\t\t<objectType>{}</objectType>", t.object_type);
        let _ = writeln!(s, "\t\t<h>{}</h>\n\t\t<w>{}</w>\n\t\t<l>{}</l>", t.h, t.w, t.l);
        let _ = writeln!(s, "\t\t<first_frame>{}</first_frame>", t.first_frame);
        s.push_str("\t\t<poses class_id=\"2\" tracking_level=\"0\" version=\"0\">\n");
        let _ = writeln!(s, "\t\t\t<count>{}</count>", t.poses.len());
        s.push_str("\t\t\t<item_version>2</item_version>\n");
        for p in &t.poses {
            let _ = writeln!(
                s,
                "\t\t\t<item class_id=\"3\" tracking_level=\"0\" version=\"2\">\n\
                 \t\t\t\t<tx>{}</tx>\n\t\t\t\t<ty>{}</ty>\n\t\t\t\t<tz>{}</tz>\n\
                 \t\t\t\t<rx>0</rx>\n\t\t\t\t<ry>0</ry>\n\t\t\t\t<rz>{}</rz>\n\
                 \t\t\t\t<state>1</state>\n\t\t\t\t<occlusion>0</occlusion>\n\
                 \t\t\t\t<occlusion_kf>0</occlusion_kf>\n\t\t\t\t<truncation>0</truncation>\n\
                 \t\t\t\t<amt_occlusion>0</amt_occlusion>\n\t\t\t\t<amt_occlusion_kf>-1</amt_occlusion_kf>\n\
                 \t\t\t\t<amt_border_l>0</amt_border_l>\n\t\t\t\t<amt_border_r>0</amt_border_r>\n\
                 \t\t\t\t<amt_border_kf>-1</amt_border_kf>\n\t\t\t</item>",
                p.tx, p.ty, p.tz, p.rz
            );
        }
        s.push_str("\t\t</poses>\n\t\t<finished>1</finished>\n\t</item>\n");
    }
    s.push_str("</tracklets>\n</boost_serialization>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_CAR: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes" ?>
<!DOCTYPE boost_serialization>
<boost_serialization signature="serialization::archive" version="9">
<tracklets class_id="0" tracking_level="0" version="0">
	<count>1</count>
	<item_version>1</item_version>
	<item class_id="1" tracking_level="0" version="1">
		<objectType>Car</objectType>
		<h>1.52</h>
		<w>1.63</w>
		<l>3.88</l>
		<first_frame>4</first_frame>
		<poses class_id="2" tracking_level="0" version="0">
			<count>1</count>
			<item_version>2</item_version>
			<item class_id="3" tracking_level="0" version="2">
				<tx>5</tx>
				<ty>0</ty>
				<tz>-1</tz>
				<rx>0.01</rx>
				<ry>-0.02</ry>
				<rz>0</rz>
				<state>1</state>
				<occlusion>0</occlusion>
			</item>
		</poses>
		<finished>1</finished>
	</item>
</tracklets>
</boost_serialization>
"#;

    #[test]
    fn one_car_one_pose() {
        let t = parse_tracklets(ONE_CAR).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].object_type, "Car");
        assert_eq!((t[0].h, t[0].w, t[0].l), (1.52, 1.63, 3.88));
        assert_eq!(t[0].first_frame, 4);
        assert_eq!(t[0].poses, vec![TrackletPose { tx: 5.0, ty: 0.0, tz: -1.0, rz: 0.0 }]);
        assert_eq!(t[0].pose_at(4), Some(&t[0].poses[0]));
        assert_eq!(t[0].pose_at(3), None);
    }

    #[test]
    fn no_items() {
        let xml = "<tracklets><count>0</count><item_version>1</item_version></tracklets>";
        assert!(parse_tracklets(xml).unwrap().is_empty());
    }

    #[test]
    fn pose_count_mismatch() {
        let xml = ONE_CAR.replacen("\t\t\t<count>1</count>", "\t\t\t<count>2</count>", 1);
        let err = parse_tracklets(&xml).unwrap_err();
        assert!(matches!(err, IngestError::XmlStructure(ref p) if p == "poses"), "{err}");
    }

    #[test]
    fn malformed_and_missing() {
        let xml = ONE_CAR.replace("<tx>5</tx>", "<tx>five</tx>");
        assert!(matches!(parse_tracklets(&xml), Err(IngestError::MalformedNumber(p)) if p.ends_with("/tx")));
        let xml = ONE_CAR.replace("<h>1.52</h>", "");
        assert!(matches!(parse_tracklets(&xml), Err(IngestError::XmlStructure(p)) if p.ends_with("/h")));
        let xml = ONE_CAR.replace("<w>1.63</w>", "<w>0</w>");
        assert!(matches!(parse_tracklets(&xml), Err(IngestError::InvalidValue { .. })));
        assert!(matches!(parse_tracklets("<a>"), Err(IngestError::XmlStructure(_))));
    }

    #[test]
    fn writer_round_trips() {
        let t = vec![Tracklet {
            object_type: "Van".into(),
            h: 2.1,
            w: 1.9,
            l: 4.7,
            first_frame: 0,
            poses: (0..5)
                .map(|k| TrackletPose { tx: 10.0 + 0.8 * k as f64, ty: -2.5, tz: -1.7, rz: 0.1 })
                .collect(),
        }];
        assert_eq!(parse_tracklets(&format_tracklets(&t)).unwrap(), t);
        assert_eq!(t[0].last_frame(), 4);
    }
}
