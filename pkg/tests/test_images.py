import json
import shutil
import tempfile
import unittest
from os import path as os_path

import numpy as np

from src.pyotom.tools.images import WINDOW_SUFFIX, exportMap, readPgm, windowMap, writePgm
from src.pyotom.tools.phantom import buildPhantom, buildReport
from src.pyotom.utils.exceptions import DomainError


class TestWindowMap(unittest.TestCase):

    def test_linear_window(self):
        """Test the window ends map to 0 and 255 and values outside are clipped."""
        gray = windowMap(np.array([[-1.0, 0.0, 50.0, 100.0, 200.0]]), (0.0, 100.0))
        np.testing.assert_array_equal(gray, [[0, 0, 128, 255, 255]])
        self.assertEqual(gray.dtype, np.uint8)

    def test_degenerate_inputs(self):
        """Test NaN pixels and zero-width windows give black."""
        np.testing.assert_array_equal(windowMap([[np.nan, 1.0]], (0.0, 1.0)), [[0, 255]])
        np.testing.assert_array_equal(windowMap([[3.0, 4.0]], (2.0, 2.0)), [[0, 0]])
        with self.assertRaises(DomainError):
            windowMap([[1.0]], (1.0, 0.0))
        with self.assertRaises(DomainError):
            windowMap([[1.0]], (0.0, np.inf))


class TestPgm(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_write_read(self):
        """Test the pixels and window survive the PGM file."""
        gray = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        file_path = os_path.join(self.tmp_dir, "map.pgm")
        writePgm(file_path, gray, (0.5, 17.0))
        with open(file_path, "rb") as file:
            self.assertTrue(file.read().startswith(b"P5\n# window 0.5 17.0\n4 3\n255\n"))
        read, window = readPgm(file_path)
        np.testing.assert_array_equal(read, gray)
        self.assertEqual(window, (0.5, 17.0))
        self.assertFalse(os_path.exists(file_path + ".partial"))

    def test_invalid_images(self):
        """Test 3-D arrays and foreign files are refused."""
        with self.assertRaises(DomainError):
            writePgm(os_path.join(self.tmp_dir, "cube.pgm"), np.zeros((2, 2, 2)), (0.0, 1.0))
        file_path = os_path.join(self.tmp_dir, "plain.pgm")
        with open(file_path, "wb") as file:
            file.write(b"P5\n2 2\n255\n\x00\x00\x00\x00")
        with self.assertRaises(DomainError):
            readPgm(file_path)


class TestExportMap(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()
        phantom = buildPhantom("kmw", width=3, height=5)
        self.report = buildReport(phantom.maps, phantom, "otom", "pr10")

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_report_map_with_window(self):
        """Test a report map is exported with its window and sidecar."""
        file_path = os_path.join(self.tmp_dir, "kmw.pgm")
        window = exportMap(self.report, "kmw", file_path, (0.0, 100.0))
        self.assertEqual(window, (0.0, 100.0))

        gray, read_window = readPgm(file_path)
        self.assertEqual(gray.shape, (5, 3))
        self.assertEqual(read_window, window)
        np.testing.assert_array_equal(gray[0], np.full(3, 13))
        np.testing.assert_array_equal(gray[-1], np.full(3, 255))

        with open(file_path + WINDOW_SUFFIX, "r", encoding="utf-8") as file:
            sidecar = json.load(file)
        self.assertEqual(sidecar, {"map": "kmw", "window": [0.0, 100.0], "width": 3, "height": 5, "units": "Hz"})

    def test_automatic_window(self):
        """Test the window defaults to the map's range."""
        file_path = os_path.join(self.tmp_dir, "t1w.pgm")
        window = exportMap(self.report, "t1w_truth", file_path)
        values = self.report.map("t1w_truth")
        self.assertEqual(window, (float(values.min()), float(values.max())))
        gray, _ = readPgm(file_path)
        self.assertEqual(int(gray.min()), 0)
        self.assertEqual(int(gray.max()), 255)

    def test_bare_array(self):
        """Test plain arrays export without units."""
        file_path = os_path.join(self.tmp_dir, "array.pgm")
        exportMap(np.full((2, 2), np.nan), "mask", file_path)
        gray, window = readPgm(file_path)
        np.testing.assert_array_equal(gray, np.zeros((2, 2)))
        self.assertEqual(window, (0.0, 0.0))
        with open(file_path + WINDOW_SUFFIX, "r", encoding="utf-8") as file:
            self.assertEqual(json.load(file)["units"], "")


if __name__ == "__main__":
    unittest.main()
