from flockguide.cli import main
import sys

sys.exit(main())
