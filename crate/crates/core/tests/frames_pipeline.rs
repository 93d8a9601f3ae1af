//! Sampling oracle and the external-decoder contract.

use std::fs;
use std::path::Path;

use actionsense::frames::{decode_frames, frame_tensors, sample_frames, DecoderConfig, FrameError, RawFrame};
use actionsense::seed::rng_for;
use rand::Rng;

fn indices(n: u64, fps: u32) -> Vec<u64> {
    let stream = (0..n).map(|i| Ok(RawFrame::filled(1, 1, [0, 0, 0], i)));
    sample_frames(stream, fps).unwrap().iter().map(|f| f.frame_index).collect()
}

#[test]
fn sampling_matches_brute_force() {
    let mut rng = rng_for(8, 0);
    for _ in 0..500 {
        let n = rng.random_range(1..400u64);
        let fps = rng.random_range(1..61u32);
        let expected: Vec<u64> = (0..n).filter(|i| i % fps as u64 == 0).collect();
        assert_eq!(indices(n, fps), expected, "n={n} fps={fps}");
    }
    assert_eq!(indices(90, 30), vec![0, 30, 60]);
}

/// Writes `frames` solid frames of `w`x`h` RGB24, frame `i` has red = i.
fn raw_video(path: &Path, frames: usize, w: usize, h: usize) {
    let mut bytes = Vec::with_capacity(frames * w * h * 3);
    for i in 0..frames {
        for _ in 0..w * h {
            bytes.extend_from_slice(&[i as u8, 0, 0]);
        }
    }
    fs::write(path, bytes).unwrap();
}

fn cat_decoder(w: usize, h: usize) -> DecoderConfig {
    DecoderConfig {
        command: "cat {input}".into(),
        width: w,
        height: h,
    }
}

#[test]
fn raw_pipe_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("clip.rgb");
    raw_video(&p, 90, 8, 6);
    let frames: Vec<RawFrame> = decode_frames(&p, None, 30, &cat_decoder(8, 6))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(frames.len(), 90);
    assert_eq!(frames[45].pixel(3, 2), [45, 0, 0]);

    let tensors = frame_tensors("clip", &p, None, 30, &cat_decoder(8, 6)).unwrap();
    assert_eq!(tensors.len(), 3);
    assert_eq!(tensors[1].frame_index, 30);
    assert!((tensors[2].at(100, 100, 0) - 60.0 / 255.0).abs() < 1e-6);
}

#[test]
fn sixty_fps_source_is_resampled_by_the_decoder() {
    // stand-in decoder: reads a 60fps raw file and keeps every second frame,
    // the way an fps filter would
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("dec.py");
    fs::write(
        &script,
        "import sys\nsrc, fps, w, h = sys.argv[1], int(sys.argv[2]), int(sys.argv[3]), int(sys.argv[4])\n\
         size = w * h * 3\ndata = open(src, 'rb').read()\nstep = 60 // fps\n\
         for i in range(0, len(data) // size, step):\n    sys.stdout.buffer.write(data[i * size:(i + 1) * size])\n",
    )
    .unwrap();
    let p = dir.path().join("clip60.rgb");
    raw_video(&p, 180, 4, 4);
    let dec = DecoderConfig {
        command: format!("python3 {} {{input}} {{fps}} {{width}} {{height}}", script.display()),
        width: 4,
        height: 4,
    };
    let n = decode_frames(&p, Some(60), 30, &dec).unwrap().count();
    assert_eq!(n, 90);
}

#[test]
fn decoder_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.mp4");
    match decode_frames(&missing, None, 30, &cat_decoder(4, 4)) {
        Err(FrameError::Decode { path, .. }) => assert_eq!(path, missing),
        other => panic!("expected Decode, got {:?}", other.err()),
    }

    let p = dir.path().join("clip.rgb");
    raw_video(&p, 2, 4, 4);
    let absent = DecoderConfig {
        command: "definitely-not-a-decoder-xyz {input}".into(),
        ..cat_decoder(4, 4)
    };
    assert!(matches!(
        decode_frames(&p, None, 30, &absent).err(),
        Some(FrameError::DecoderUnavailable { .. })
    ));

    // truncated last frame
    fs::write(&p, vec![0u8; 4 * 4 * 3 + 5]).unwrap();
    let results: Vec<_> = decode_frames(&p, None, 30, &cat_decoder(4, 4)).unwrap().collect();
    assert!(results.last().unwrap().is_err());

    // empty output
    fs::write(&p, b"").unwrap();
    let first = decode_frames(&p, None, 30, &cat_decoder(4, 4)).unwrap().next();
    assert!(matches!(first, Some(Err(FrameError::EmptyStream(_)))));

    // non-zero exit
    let failing = DecoderConfig {
        command: "false {input}".into(),
        ..cat_decoder(4, 4)
    };
    let first = decode_frames(&p, None, 30, &failing).unwrap().next();
    assert!(matches!(first, Some(Err(FrameError::Decode { .. }))));
}

#[test]
fn frame_directory_source() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..60u8 {
        image::save_buffer(
            dir.path().join(format!("f{i:03}.png")),
            &[i, 10, 20, i, 10, 20, i, 10, 20, i, 10, 20],
            2,
            2,
            image::ExtendedColorType::Rgb8,
        )
        .unwrap();
    }
    let tensors = frame_tensors("d", dir.path(), Some(30), 30, &DecoderConfig::default()).unwrap();
    assert_eq!(tensors.iter().map(|t| t.frame_index).collect::<Vec<_>>(), vec![0, 30]);
    assert!((tensors[1].at(0, 0, 0) - 30.0 / 255.0).abs() < 1e-6);
    // 60 images declared at 60fps, normalized to 30: every other image
    let t60 = frame_tensors("d", dir.path(), Some(60), 30, &DecoderConfig::default()).unwrap();
    assert_eq!(t60.len(), 1);
}
