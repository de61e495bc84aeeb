# -*- coding: utf-8 -*-
"""
金融时间序列数据增强与组合构建工具包
"""

__version__ = "1.0.0"
__author__ = "AugPort"
