// Rotated BEV and 3D IoU plus all-point AP on hand-made detections.

use asf::headloss::{Box3d, Detection, GtBox};
use asf::metrics::{average_precision, iou_3d, rotated_iou_bev, FrameResult, IouMode};

pub fn run_example() -> asf::Result<Vec<f64>> {
    let gt = Box3d::new(10.0, 0.0, 0.8, 4.4, 1.9, 1.6, 0.0);
    let turned = Box3d::new(10.0, 0.0, 0.8, 4.4, 1.9, 1.6, std::f64::consts::FRAC_PI_4);
    let lifted = Box3d::new(10.3, 0.2, 1.2, 4.4, 1.9, 1.6, 0.1);
    println!("BEV IoU turned 45°: {:.4}", rotated_iou_bev(&gt, &turned));
    println!("BEV IoU shifted:    {:.4}", rotated_iou_bev(&gt, &lifted));
    println!("3D IoU shifted:     {:.4}", iou_3d(&gt, &lifted));

    let det = |b: Box3d, score: f64, anchor: usize| Detection { bbox: b, class: 0, score, anchor };
    let frames = vec![
        FrameResult {
            detections: vec![det(lifted, 0.9, 0), det(turned, 0.4, 1)],
            gts: vec![GtBox { bbox: gt, class: 0 }],
        },
        FrameResult {
            detections: vec![det(Box3d::new(3.0, 4.0, 0.8, 4.4, 1.9, 1.6, 0.0), 0.7, 0)],
            gts: vec![GtBox { bbox: Box3d::new(20.0, -4.0, 0.8, 4.4, 1.9, 1.6, 0.0), class: 0 }],
        },
    ];
    let mut aps = Vec::new();
    for mode in [IouMode::Bev, IouMode::ThreeD] {
        for thr in [0.3, 0.5] {
            let v = average_precision(&frames, 0, mode, thr).expect("class has ground truth");
            println!("AP {mode}@{thr}: {:.4} ({} gt, {} det)", v.ap, v.num_gt, v.num_det);
            aps.push(v.ap);
        }
    }
    Ok(aps)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("metrics");
}
