# Private Bandits Test Suite
