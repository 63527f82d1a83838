import sys

from proptail.main import main

sys.exit(main())
