from pothole_rgbd.main import main

raise SystemExit(main())
