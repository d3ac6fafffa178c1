#!/usr/bin/env python3

import socialcue

socialcue.run()
