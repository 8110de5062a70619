# -*- coding: utf-8 -*-
"""Multi-agent simulation harness around the alignment pipeline."""
