from tnpde.cli import main

raise SystemExit(main())
