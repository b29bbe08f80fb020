use std::collections::BTreeSet;
use std::path::Path;

use stacksurgeon::layout::{self, CpuType, RunMeta};

fn grid() -> Vec<RunMeta> {
    let mut metas = Vec::new();
    for cpu_type in CpuType::ALL {
        for cores in [1, 4, 16] {
            for memory_gb in [3, 8, 16] {
                for ruby in [true, false] {
                    metas.push(RunMeta {
                        benchmark: "parsec-3.0".into(),
                        application: "blackscholes".into(),
                        cores,
                        cpu_type,
                        memory_gb,
                        ruby,
                    });
                }
            }
        }
    }
    metas
}

#[test]
fn discover_inverts_layout_on_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let metas = grid();
    for meta in &metas {
        let path = dir.path().join(layout::layout_path(meta));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, "{}").unwrap();
    }
    std::fs::write(dir.path().join("parsec-3.0/notes.txt"), "x").unwrap();

    let found = layout::discover_runs(dir.path()).unwrap();
    assert_eq!(found.runs.len(), metas.len());
    let got: BTreeSet<String> = found.runs.iter().map(|(m, _)| format!("{m:?}")).collect();
    let want: BTreeSet<String> = metas.iter().map(|m| format!("{m:?}")).collect();
    assert_eq!(got, want);
    for (meta, path) in &found.runs {
        assert_eq!(path, &dir.path().join(layout::layout_path(meta)));
    }
    assert_eq!(found.warnings.len(), 1);
    assert!(found.warnings[0].contains("notes.txt"));
}

#[test]
fn literal_example_path_and_label() {
    let meta = RunMeta {
        benchmark: "parsec-3.0".into(),
        application: "blackscholes".into(),
        cores: 1,
        cpu_type: CpuType::AtomicSimple,
        memory_gb: 3,
        ruby: true,
    };
    assert_eq!(
        layout::layout_path(&meta),
        Path::new("parsec-3.0/blackscholes/1/AtomicSimpleCPU/3GB/ruby/callstack.json")
    );
    assert_eq!(layout::label(&meta).as_str(), "1AS3r");
}

#[test]
fn empty_directory_has_no_runs() {
    let dir = tempfile::tempdir().unwrap();
    let found = layout::discover_runs(dir.path()).unwrap();
    assert!(found.runs.is_empty() && found.warnings.is_empty());
    assert!(layout::discover_runs(&dir.path().join("missing")).is_err());
}
